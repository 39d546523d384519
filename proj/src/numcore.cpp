#include "i2s/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace i2s {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::tanh:
      return std::tanh(x);
  }
  return x;
}

// Derivative expressed through the pre-activation.
double activate_grad(Activation a, double pre) {
  switch (a) {
    case Activation::relu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_string(shape_));
  }
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::from_vector(Vec values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ShapeError("MLP needs at least input and output widths");
  for (auto w : widths) {
    if (w == 0) throw ShapeError("MLP widths must be >= 1");
  }
}

Mlp Mlp::zeros(const MlpSpec& spec) {
  spec.validate();
  Mlp m;
  m.spec = spec;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    m.weights.emplace_back(std::vector<std::size_t>{spec.widths[l + 1], spec.widths[l]});
    m.biases.emplace_back(std::vector<std::size_t>{spec.widths[l + 1]});
  }
  return m;
}

Mlp Mlp::glorot(const MlpSpec& spec, Rng& rng) {
  Mlp m = zeros(spec);
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const double bound =
        std::sqrt(6.0 / static_cast<double>(spec.widths[l] + spec.widths[l + 1]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& w : m.weights[l].values()) w = dist(rng);
    for (auto& b : m.biases[l].values()) b = dist(rng);
  }
  return m;
}

void Mlp::check_shapes(const std::string& name) const {
  spec.validate();
  if (weights.size() != spec.layers() || biases.size() != spec.layers()) {
    throw ShapeError(name + ": expected " + std::to_string(spec.layers()) + " layers");
  }
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const std::vector<std::size_t> ws{spec.widths[l + 1], spec.widths[l]};
    const std::vector<std::size_t> bs{spec.widths[l + 1]};
    if (weights[l].shape() != ws || biases[l].shape() != bs) {
      throw ShapeError(name + " layer " + std::to_string(l) + ": weight " +
                       shape_string(weights[l].shape()) + " / bias " +
                       shape_string(biases[l].shape()) + ", expected " + shape_string(ws) +
                       " / " + shape_string(bs));
    }
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

Vec mlp_forward(const Mlp& mlp, std::span<const double> x) {
  MlpTrace trace;
  return mlp_forward(mlp, x, trace);
}

Vec mlp_forward(const Mlp& mlp, std::span<const double> x, MlpTrace& trace) {
  const auto& spec = mlp.spec;
  if (x.size() != spec.input_width()) {
    throw ShapeError("MLP layer 0: input width " + std::to_string(x.size()) + ", expected " +
                     std::to_string(spec.input_width()));
  }
  const std::size_t layers = spec.layers();
  trace.inputs.resize(layers);
  trace.preact.resize(layers);
  Vec current(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor& w = mlp.weights[l];
    const Tensor& b = mlp.biases[l];
    const std::size_t out = spec.widths[l + 1];
    const std::size_t in = spec.widths[l];
    if (w.rows() != out || w.cols() != in || b.size() != out) {
      throw ShapeError("MLP layer " + std::to_string(l) + ": parameter shape " +
                       shape_string(w.shape()) + " does not match widths");
    }
    Vec pre(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = &w.raw()[o * in];
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * current[i];
      pre[o] = acc;
    }
    trace.inputs[l] = std::move(current);
    current.resize(out);
    if (l + 1 < layers) {
      for (std::size_t o = 0; o < out; ++o) current[o] = activate(spec.activation, pre[o]);
    } else {
      switch (spec.final_activation) {
        case FinalActivation::none:
          current = pre;
          break;
        case FinalActivation::sigmoid:
          for (std::size_t o = 0; o < out; ++o) current[o] = sigmoid(pre[o]);
          break;
        case FinalActivation::softmax:
          current = softmax(pre);
          break;
      }
    }
    trace.preact[l] = std::move(pre);
  }
  trace.output = current;
  return current;
}

Vec mlp_backward(const Mlp& mlp, const MlpTrace& trace, std::span<const double> grad_out,
                 Mlp& grads) {
  const auto& spec = mlp.spec;
  const std::size_t layers = spec.layers();
  if (grad_out.size() != spec.output_width()) {
    throw ShapeError("MLP backward: gradient width " + std::to_string(grad_out.size()) +
                     ", expected " + std::to_string(spec.output_width()));
  }
  // Gradient with respect to the final pre-activation.
  Vec g(grad_out.begin(), grad_out.end());
  switch (spec.final_activation) {
    case FinalActivation::none:
      break;
    case FinalActivation::sigmoid:
      for (std::size_t o = 0; o < g.size(); ++o) {
        const double s = trace.output[o];
        g[o] *= s * (1.0 - s);
      }
      break;
    case FinalActivation::softmax:
      g = softmax_backward(trace.output, g);
      break;
  }
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t out = spec.widths[l + 1];
    const std::size_t in = spec.widths[l];
    const Vec& input = trace.inputs[l];
    double* gw = grads.weights[l].values().data();
    double* gb = grads.biases[l].values().data();
    const double* w = mlp.weights[l].raw().data();
    Vec gin(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double go = g[o];
      if (go == 0.0) continue;
      gb[o] += go;
      double* gw_row = gw + o * in;
      const double* w_row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        gw_row[i] += go * input[i];
        gin[i] += go * w_row[i];
      }
    }
    if (l > 0) {
      const Vec& pre = trace.preact[l - 1];
      for (std::size_t i = 0; i < in; ++i) gin[i] *= activate_grad(spec.activation, pre[i]);
    }
    g = std::move(gin);
  }
  return g;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) throw ShapeError("log_sum_exp of an empty vector");
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) throw NumericError("log_sum_exp: non-finite input");
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("squared_distance: dimensions " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Vec softmax(std::span<const double> x) {
  if (x.empty()) throw ShapeError("softmax over an empty axis");
  const double m = *std::max_element(x.begin(), x.end());
  Vec y(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - m);
    s += y[i];
  }
  for (auto& v : y) v /= s;
  return y;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (x.rank() == 1) {
    if (axis != 0) throw ShapeError("softmax: axis out of range for rank-1 tensor");
    return Tensor::from_vector(softmax(x.values()));
  }
  if (x.rank() != 2 || axis > 1) throw ShapeError("softmax: only rank 1 and 2 are supported");
  Tensor y = x;
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  if (axis == 1) {
    for (std::size_t r = 0; r < rows; ++r) {
      const Vec row = softmax(x.values().subspan(r * cols, cols));
      std::copy(row.begin(), row.end(), y.values().begin() + static_cast<std::ptrdiff_t>(r * cols));
    }
  } else {
    Vec col(rows);
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t r = 0; r < rows; ++r) col[r] = x.at(r, c);
      const Vec out = softmax(col);
      for (std::size_t r = 0; r < rows; ++r) y.at(r, c) = out[r];
    }
  }
  return y;
}

Vec softmax_backward(std::span<const double> y, std::span<const double> gy) {
  const double inner = dot(y, gy);
  Vec gx(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) gx[i] = y[i] * (gy[i] - inner);
  return gx;
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
              OptimizerState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (!grads[k]->same_shape(*params[k])) {
      throw ShapeError("sgd_step: gradient " + std::to_string(k) + " has shape " +
                       shape_string(grads[k]->shape()) + ", parameter has " +
                       shape_string(params[k]->shape()));
    }
    if (!grads[k]->all_finite()) {
      throw NumericError("sgd_step: non-finite gradient in tensor " + std::to_string(k));
    }
  }
  if (state.velocity.empty()) {
    for (const Tensor* p : params) state.velocity.emplace_back(p->shape());
  }
  if (state.velocity.size() != params.size()) {
    throw ShapeError("sgd_step: velocity buffers do not mirror the parameter list");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto v = state.velocity[k].values();
    auto p = params[k]->values();
    const auto g = grads[k]->values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = state.momentum * v[i] + g[i];
      p[i] -= state.learning_rate * v[i];
    }
  }
}

GradCheckResult grad_check(
    const std::function<LossWithGrad(const std::vector<Tensor>&)>& closure,
    std::vector<Tensor> params, double epsilon) {
  if (epsilon < 1e-7 || epsilon > 1e-3) {
    throw std::invalid_argument("grad_check: epsilon must lie in [1e-7, 1e-3]");
  }
  const LossWithGrad analytic = closure(params);
  if (!std::isfinite(analytic.loss)) throw NumericError("grad_check: non-finite loss");
  if (analytic.grads.size() != params.size()) {
    throw ShapeError("grad_check: closure returned the wrong number of gradients");
  }
  GradCheckResult result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (!analytic.grads[t].same_shape(params[t])) {
      throw ShapeError("grad_check: gradient " + std::to_string(t) + " shape mismatch");
    }
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double saved = params[t][i];
      params[t][i] = saved + epsilon;
      const double plus = closure(params).loss;
      params[t][i] = saved - epsilon;
      const double minus = closure(params).loss;
      params[t][i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("grad_check: non-finite loss at tensor " + std::to_string(t));
      }
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = analytic.grads[t][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      ++result.coordinates;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_tensor = t;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace i2s
