#include "i2s/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace i2s {

std::string to_string(MetricVariant v) {
  switch (v) {
    case MetricVariant::avg: return "avg";
    case MetricVariant::nn: return "nn";
    case MetricVariant::weighted_v: return "weighted_v";
    case MetricVariant::weighted_uv: return "weighted_uv";
    case MetricVariant::avg_specific: return "avg_specific";
    case MetricVariant::full: return "full";
  }
  return "?";
}

MetricVariant parse_metric_variant(const std::string& name) {
  for (auto v : {MetricVariant::avg, MetricVariant::nn, MetricVariant::weighted_v,
                 MetricVariant::weighted_uv, MetricVariant::avg_specific, MetricVariant::full}) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown metric variant '" + name +
                              "' (avg, nn, weighted_v, weighted_uv, avg_specific, full)");
}

bool uses_neighboring(MetricVariant v) {
  return v == MetricVariant::weighted_uv || v == MetricVariant::full;
}
bool uses_intra_set(MetricVariant v) {
  return v == MetricVariant::weighted_v || v == MetricVariant::weighted_uv ||
         v == MetricVariant::full;
}
bool uses_scaling(MetricVariant v) {
  return v == MetricVariant::avg_specific || v == MetricVariant::full;
}

namespace {

bool uniform_weights(MetricVariant v) {
  return v == MetricVariant::avg || v == MetricVariant::avg_specific;
}

// softplus^{-1}
double inverse_softplus(double y) {
  if (y < 0.0) throw std::invalid_argument("gamma must be non-negative");
  if (y == 0.0) return -std::numeric_limits<double>::infinity();
  if (y > 30.0) return y + std::log(-std::expm1(-y));
  return std::log(std::expm1(y));
}

MlpSpec importance_spec(std::size_t d_emb) {
  return MlpSpec{{5 * d_emb, d_emb, 1}, Activation::relu, FinalActivation::none};
}
MlpSpec scaling_spec(std::size_t d_emb) {
  return MlpSpec{{4 * d_emb, d_emb, d_emb}, Activation::relu, FinalActivation::none};
}

}  // namespace

void MetricParams::set_gamma(double gamma) { gamma_raw[0] = inverse_softplus(gamma); }

MetricParams MetricParams::zeros(std::size_t d_emb) {
  MetricParams p;
  p.importance = Mlp::zeros(importance_spec(d_emb));
  p.scaling = Mlp::zeros(scaling_spec(d_emb));
  return p;
}

MetricParams MetricParams::init(std::size_t d_emb, Rng& rng) {
  MetricParams p;
  p.importance = Mlp::glorot(importance_spec(d_emb), rng);
  p.scaling = Mlp::glorot(scaling_spec(d_emb), rng);
  p.set_gamma(1.0);
  return p;
}

SetStatistics set_statistics(std::span<const Vec> items) {
  if (items.empty()) throw ShapeError("set statistics of an empty set");
  const std::size_t d = items.front().size();
  const double k = static_cast<double>(items.size());
  SetStatistics s;
  s.values.assign(4 * d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    double lo = items[0][j];
    double hi = items[0][j];
    for (const auto& f : items) {
      if (f.size() != d) throw ShapeError("set items have differing dimensions");
      sum += f[j];
      lo = std::min(lo, f[j]);
      hi = std::max(hi, f[j]);
    }
    const double mean = sum / k;
    double var = 0.0;
    for (const auto& f : items) var += (f[j] - mean) * (f[j] - mean);
    s.values[j] = mean;
    s.values[d + j] = std::sqrt(var / k);
    s.values[2 * d + j] = lo;
    s.values[3 * d + j] = hi;
  }
  return s;
}

void set_statistics_backward(std::span<const Vec> items, const SetStatistics& stats,
                             std::span<const double> grad_stats, std::vector<Vec>& grad_items) {
  const std::size_t d = stats.dim();
  const std::size_t n = items.size();
  const double k = static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) {
    const double g_mean = grad_stats[j];
    const double g_std = grad_stats[d + j];
    const double mean = stats.values[j];
    const double sd = stats.values[d + j];
    std::size_t argmin = 0, argmax = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (items[i][j] < items[argmin][j]) argmin = i;
      if (items[i][j] > items[argmax][j]) argmax = i;
      grad_items[i][j] += g_mean / k;
      if (sd > 0.0) grad_items[i][j] += g_std * (items[i][j] - mean) / (k * sd);
    }
    grad_items[argmin][j] += grad_stats[2 * d + j];
    grad_items[argmax][j] += grad_stats[3 * d + j];
  }
}

PostSet::PostSet(std::vector<EmbeddedItem> items) : items_(std::move(items)) {
  if (items_.empty()) throw ShapeError("a post set needs at least one item");
  refresh();
}

void PostSet::add(EmbeddedItem item) {
  items_.push_back(std::move(item));
  refresh();
}

void PostSet::refresh() {
  features_.clear();
  for (const auto& it : items_) {
    if (it.f.size() != items_.front().f.size()) {
      throw ShapeError("item " + it.item_id + " has a different embedding dimension");
    }
    features_.push_back(it.f);
  }
  stats_ = set_statistics(features_);
}

double d_item(std::span<const double> a, std::span<const double> b) {
  return squared_distance(a, b);
}

double dist_avg(const PostSet& set, std::span<const double> f) {
  return d_item(set.stats().mean(), f);
}

double dist_nn(const PostSet& set, std::span<const double> f) {
  double best = d_item(set.features()[0], f);
  for (std::size_t i = 1; i < set.size(); ++i) best = std::min(best, d_item(set.features()[i], f));
  return best;
}

ImportanceWeights importance(const PostSet& set, std::span<const double> f,
                             const MetricParams& params, MetricVariant variant) {
  return SetDistance(set.features(), params, variant).importance(f);
}

ScalingVector scaling(const PostSet& set, const MetricParams& params) {
  return ScalingVector{SetDistance(set.features(), params, MetricVariant::full).scaling()};
}

double dist(const PostSet& set, std::span<const double> f, const MetricParams& params,
            MetricVariant variant) {
  return SetDistance(set.features(), params, variant).distance(f);
}

SetDistance::SetDistance(std::span<const Vec> items, const MetricParams& params,
                         MetricVariant variant)
    : items_(items), params_(params), variant_(variant) {
  stats_ = set_statistics(items);
  const std::size_t d = items.front().size();
  gamma_ = params.gamma();
  if (uses_intra_set(variant)) {
    v_.resize(items.size());
    v_traces_.resize(items.size());
    Vec input(5 * d);
    std::copy(stats_.values.begin(), stats_.values.end(), input.begin() + static_cast<std::ptrdiff_t>(d));
    for (std::size_t i = 0; i < items.size(); ++i) {
      std::copy(items[i].begin(), items[i].end(), input.begin());
      v_[i] = mlp_forward(params.importance, input, v_traces_[i])[0];
    }
  }
  if (uses_scaling(variant)) {
    t_ = softmax(mlp_forward(params.scaling, stats_.values, t_trace_));
    if (t_.size() != d) throw ShapeError("scaling MLP output does not match embedding dimension");
  }
}

ImportanceWeights SetDistance::importance(std::span<const double> query) const {
  const std::size_t n = items_.size();
  ImportanceWeights w;
  w.u.assign(n, 0.0);
  w.v.assign(n, 0.0);
  if (variant_ != MetricVariant::avg && variant_ != MetricVariant::avg_specific &&
      variant_ != MetricVariant::nn) {
    for (std::size_t i = 0; i < n; ++i) {
      if (uses_neighboring(variant_)) w.u[i] = -gamma_ * d_item(items_[i], query);
      if (uses_intra_set(variant_)) w.v[i] = v_[i];
    }
  }
  w.w.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.w[i] = w.u[i] + w.v[i];
  w.alpha = softmax(w.w);
  return w;
}

double SetDistance::distance(std::span<const double> query) const {
  QueryTrace trace;
  return distance(query, trace);
}

double SetDistance::distance(std::span<const double> query, QueryTrace& tr) const {
  const std::size_t n = items_.size();
  const std::size_t d = items_.front().size();
  if (query.size() != d) {
    throw ShapeError("query dimension " + std::to_string(query.size()) + ", set dimension " +
                     std::to_string(d));
  }
  tr.item_dist.resize(n);
  if (variant_ == MetricVariant::nn || uses_neighboring(variant_)) {
    for (std::size_t i = 0; i < n; ++i) tr.item_dist[i] = d_item(items_[i], query);
  }
  if (variant_ == MetricVariant::nn) {
    tr.nearest = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (tr.item_dist[i] < tr.item_dist[tr.nearest]) tr.nearest = i;
    }
    tr.distance = tr.item_dist[tr.nearest];
    return tr.distance;
  }

  if (uniform_weights(variant_)) {
    tr.alpha.assign(n, 1.0 / static_cast<double>(n));
    tr.prototype.assign(stats_.mean().begin(), stats_.mean().end());
  } else {
    Vec w(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (uses_neighboring(variant_)) w[i] -= gamma_ * tr.item_dist[i];
      if (uses_intra_set(variant_)) w[i] += v_[i];
    }
    tr.alpha = softmax(w);
    tr.prototype.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = tr.alpha[i];
      for (std::size_t j = 0; j < d; ++j) tr.prototype[j] += a * items_[i][j];
    }
  }

  double s = 0.0;
  if (uses_scaling(variant_)) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = t_[j] * tr.prototype[j] - t_[j] * query[j];
      s += diff * diff;
    }
  } else {
    s = d_item(tr.prototype, query);
  }
  tr.distance = s;
  return s;
}

SetGradients SetDistance::make_gradients() const {
  SetGradients g;
  const std::size_t d = items_.front().size();
  g.items.assign(items_.size(), Vec(d, 0.0));
  g.t.assign(d, 0.0);
  g.v.assign(items_.size(), 0.0);
  return g;
}

Vec SetDistance::backward_query(std::span<const double> query, const QueryTrace& tr, double grad,
                                SetGradients& acc) const {
  const std::size_t n = items_.size();
  const std::size_t d = query.size();
  Vec g_query(d, 0.0);
  if (variant_ == MetricVariant::nn) {
    const Vec& f = items_[tr.nearest];
    for (std::size_t j = 0; j < d; ++j) {
      const double g = 2.0 * (f[j] - query[j]) * grad;
      acc.items[tr.nearest][j] += g;
      g_query[j] -= g;
    }
    return g_query;
  }

  Vec g_proto(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = tr.prototype[j] - query[j];
    if (uses_scaling(variant_)) {
      const double t2 = t_[j] * t_[j];
      g_proto[j] = 2.0 * t2 * diff * grad;
      acc.t[j] += 2.0 * t_[j] * diff * diff * grad;
    } else {
      g_proto[j] = 2.0 * diff * grad;
    }
    g_query[j] -= g_proto[j];
  }

  if (uniform_weights(variant_)) {
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) acc.items[i][j] += g_proto[j] * inv;
    return g_query;
  }

  Vec g_alpha(n);
  for (std::size_t i = 0; i < n; ++i) {
    g_alpha[i] = dot(items_[i], g_proto);
    for (std::size_t j = 0; j < d; ++j) acc.items[i][j] += tr.alpha[i] * g_proto[j];
  }
  const Vec g_w = softmax_backward(tr.alpha, g_alpha);
  for (std::size_t i = 0; i < n; ++i) {
    if (uses_neighboring(variant_)) {
      // u_i = -gamma * |f_i - q|^2
      acc.gamma -= g_w[i] * tr.item_dist[i];
      const double c = -gamma_ * g_w[i] * 2.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = items_[i][j] - query[j];
        acc.items[i][j] += c * diff;
        g_query[j] -= c * diff;
      }
    }
    if (uses_intra_set(variant_)) acc.v[i] += g_w[i];
  }
  return g_query;
}

void SetDistance::backward_set(SetGradients& acc, MetricParams& grads,
                               std::vector<Vec>& grad_items) const {
  const std::size_t n = items_.size();
  const std::size_t d = items_.front().size();
  Vec g_stats(4 * d, 0.0);
  bool stats_used = false;
  if (uses_intra_set(variant_)) {
    stats_used = true;
    for (std::size_t i = 0; i < n; ++i) {
      const double gv[1] = {acc.v[i]};
      const Vec g_in = mlp_backward(params_.importance, v_traces_[i], gv, grads.importance);
      for (std::size_t j = 0; j < d; ++j) grad_items[i][j] += g_in[j];
      for (std::size_t j = 0; j < 4 * d; ++j) g_stats[j] += g_in[d + j];
    }
  }
  if (uses_scaling(variant_)) {
    stats_used = true;
    const Vec g_logits = softmax_backward(t_, acc.t);
    const Vec g_in = mlp_backward(params_.scaling, t_trace_, g_logits, grads.scaling);
    for (std::size_t j = 0; j < 4 * d; ++j) g_stats[j] += g_in[j];
  }
  if (uses_neighboring(variant_)) grads.gamma_raw[0] += acc.gamma * sigmoid(params_.gamma_raw[0]);
  if (stats_used) set_statistics_backward(items_, stats_, g_stats, grad_items);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) grad_items[i][j] += acc.items[i][j];
}

}  // namespace i2s
