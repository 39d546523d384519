// Dense numeric kernel: tensors, small MLPs with hand-written backward passes,
// stable softmax / log-sum-exp, SGD with momentum and a finite-difference
// gradient checker. Everything above this layer is expressed in these
// primitives.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace i2s {

using Vec = std::vector<double>;
using Rng = std::mt19937_64;

/// Raised on shape or dimension disagreements. The message names the
/// offending layer, tensor or item.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a NaN or Inf would escape a public operation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major dense tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor from_vector(Vec values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_.front(); }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& raw() const { return data_; }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

enum class Activation { relu, tanh };
enum class FinalActivation { none, sigmoid, softmax };

struct MlpSpec {
  std::vector<std::size_t> widths;  // input, hidden..., output
  Activation activation = Activation::relu;
  FinalActivation final_activation = FinalActivation::none;

  void validate() const;
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  std::size_t layers() const { return widths.size() - 1; }
};

/// An MLP together with its parameters. weights[l] has shape
/// [widths[l+1], widths[l]], biases[l] has shape [widths[l+1]].
struct Mlp {
  MlpSpec spec;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  static Mlp zeros(const MlpSpec& spec);
  /// Weights and biases drawn uniformly from +-sqrt(6 / (fan_in + fan_out)).
  static Mlp glorot(const MlpSpec& spec, Rng& rng);

  /// Throws ShapeError if any parameter disagrees with the spec.
  void check_shapes(const std::string& name) const;
  std::size_t parameter_count() const;
};

/// Intermediate values of one forward pass, consumed by mlp_backward.
struct MlpTrace {
  std::vector<Vec> inputs;     // inputs[l] is the input to layer l
  std::vector<Vec> preact;     // pre-activation output of layer l
  Vec output;
};

Vec mlp_forward(const Mlp& mlp, std::span<const double> x);
Vec mlp_forward(const Mlp& mlp, std::span<const double> x, MlpTrace& trace);

/// Accumulates parameter gradients into `grads` (same spec as `mlp`) and
/// returns the gradient with respect to the input.
Vec mlp_backward(const Mlp& mlp, const MlpTrace& trace,
                 std::span<const double> grad_out, Mlp& grads);

// Elementwise and reduction helpers.
double sigmoid(double x);
double softplus(double x);
double log_sum_exp(std::span<const double> x);
double squared_distance(std::span<const double> a, std::span<const double> b);
double dot(std::span<const double> a, std::span<const double> b);

Vec softmax(std::span<const double> x);
/// Softmax along `axis` of a rank-1 or rank-2 tensor.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Gradient of softmax given its output y and upstream gradient gy.
Vec softmax_backward(std::span<const double> y, std::span<const double> gy);

struct OptimizerState {
  double learning_rate = 0.001;
  double momentum = 0.95;
  std::vector<Tensor> velocity;
};

/// Classical momentum: v <- momentum * v + g; p <- p - lr * v.
/// Velocity buffers are created on first use.
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
              OptimizerState& state);

struct LossWithGrad {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Compares the analytic gradient returned by `closure` at `params` against
/// central differences, coordinate by coordinate. The error for one
/// coordinate is |analytic - numeric| / max(1, |analytic|).
GradCheckResult grad_check(
    const std::function<LossWithGrad(const std::vector<Tensor>&)>& closure,
    std::vector<Tensor> params, double epsilon = 1e-5);

}  // namespace i2s
