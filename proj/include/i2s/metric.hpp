// Item-to-set distances: averaged, nearest-neighbour, importance-weighted and
// user-specific scaled.
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "i2s/embedding.hpp"
#include "i2s/numcore.hpp"

namespace i2s {

enum class MetricVariant { avg, nn, weighted_v, weighted_uv, avg_specific, full };

std::string to_string(MetricVariant v);
MetricVariant parse_metric_variant(const std::string& name);

bool uses_neighboring(MetricVariant v);
bool uses_intra_set(MetricVariant v);
bool uses_scaling(MetricVariant v);

struct MetricParams {
  /// gamma = softplus(gamma_raw[0]) keeps the neighbouring weight non-negative.
  Tensor gamma_raw{{1}};
  Mlp importance;  // MLP_v: [f_i, stat(S)] -> scalar
  Mlp scaling;     // MLP_t: stat(S) -> d_emb logits

  double gamma() const { return softplus(gamma_raw[0]); }
  /// set_gamma(0) stores -inf so that gamma is exactly zero.
  void set_gamma(double gamma);

  static MetricParams zeros(std::size_t d_emb);
  /// Random MLPs, gamma initialised to 1.
  static MetricParams init(std::size_t d_emb, Rng& rng);
};

/// concat(mean, std, min, max) per dimension; std is the population std.
struct SetStatistics {
  Vec values;
  std::size_t dim() const { return values.size() / 4; }
  std::span<const double> mean() const { return std::span(values).subspan(0, dim()); }
  std::span<const double> stddev() const { return std::span(values).subspan(dim(), dim()); }
  std::span<const double> min() const { return std::span(values).subspan(2 * dim(), dim()); }
  std::span<const double> max() const { return std::span(values).subspan(3 * dim(), dim()); }
};

SetStatistics set_statistics(std::span<const Vec> items);
/// Accumulates dL/d(items) given dL/d(stat).
void set_statistics_backward(std::span<const Vec> items, const SetStatistics& stats,
                             std::span<const double> grad_stats, std::vector<Vec>& grad_items);

struct ScalingVector {
  Vec t;
};

struct ImportanceWeights {
  Vec u;
  Vec v;
  Vec w;
  Vec alpha;
};

/// A user's set of embedded items with its statistics cached. The scaling
/// vector depends on parameters and is cached by prepare().
class PostSet {
 public:
  explicit PostSet(std::vector<EmbeddedItem> items);

  const std::vector<EmbeddedItem>& items() const { return items_; }
  const std::vector<Vec>& features() const { return features_; }
  const SetStatistics& stats() const { return stats_; }
  std::size_t size() const { return items_.size(); }
  std::size_t dim() const { return features_.front().size(); }

  void add(EmbeddedItem item);

 private:
  void refresh();

  std::vector<EmbeddedItem> items_;
  std::vector<Vec> features_;
  SetStatistics stats_;
};

double d_item(std::span<const double> a, std::span<const double> b);
double dist_avg(const PostSet& set, std::span<const double> f);
double dist_nn(const PostSet& set, std::span<const double> f);
ImportanceWeights importance(const PostSet& set, std::span<const double> f,
                             const MetricParams& params, MetricVariant variant);
ScalingVector scaling(const PostSet& set, const MetricParams& params);
double dist(const PostSet& set, std::span<const double> f, const MetricParams& params,
            MetricVariant variant);

/// Per-query intermediate values kept for the backward pass.
struct QueryTrace {
  Vec item_dist;  // d(f_i, f)
  Vec alpha;
  Vec prototype;
  std::size_t nearest = 0;
  double distance = 0.0;
};

/// Gradients flowing into the set-level quantities, accumulated over queries.
struct SetGradients {
  std::vector<Vec> items;
  Vec t;
  Vec v;
  double gamma = 0.0;
};

/// Differentiable item-to-set distance against one fixed set. The set-level
/// work (statistics, intra-set scores, scaling) is done once at
/// construction; each query then costs O(K * d).
class SetDistance {
 public:
  SetDistance(std::span<const Vec> items, const MetricParams& params, MetricVariant variant);

  double distance(std::span<const double> query) const;
  double distance(std::span<const double> query, QueryTrace& trace) const;

  ImportanceWeights importance(std::span<const double> query) const;
  const Vec& scaling() const { return t_; }
  const SetStatistics& stats() const { return stats_; }

  SetGradients make_gradients() const;
  /// Accumulates set-level gradients for one query and returns dL/d(query).
  Vec backward_query(std::span<const double> query, const QueryTrace& trace, double grad,
                     SetGradients& acc) const;
  /// Pushes accumulated set-level gradients into parameter and item gradients.
  void backward_set(SetGradients& acc, MetricParams& grads, std::vector<Vec>& grad_items) const;

 private:
  std::span<const Vec> items_;
  const MetricParams& params_;
  MetricVariant variant_;
  SetStatistics stats_;
  Vec v_;
  std::vector<MlpTrace> v_traces_;
  Vec t_;
  MlpTrace t_trace_;
  double gamma_ = 0.0;
};

}  // namespace i2s
