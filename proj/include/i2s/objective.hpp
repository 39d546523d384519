// Episodic training: sampling (set, positive, negatives), the (m+1)-way
// classification loss, contrastive / triplet baselines, and the SGD loop.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "i2s/features.hpp"
#include "i2s/metric.hpp"
#include "i2s/model.hpp"

namespace i2s {

struct PostRef {
  std::size_t user = 0;
  std::size_t post = 0;
  friend bool operator==(const PostRef&, const PostRef&) = default;
};

/// One training sample. All fields index into the dataset it was drawn from.
struct Episode {
  std::size_t user = 0;
  std::vector<std::size_t> set_posts;  // K distinct posts of `user`
  std::size_t positive = 0;            // another post of `user`, not in the set
  std::vector<PostRef> negatives;      // m posts of other users
  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Throws std::invalid_argument when no user has K+1 posts or there is no
/// second user to draw negatives from.
Episode sample_episode(const Dataset& dataset, std::size_t K, std::size_t m, Rng& rng);

enum class LossKind { cls, contrastive, triplet };
std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct LossConfig {
  LossKind kind = LossKind::cls;
  std::size_t m = 50;
  double margin = 1.0;
  void validate() const;
};

/// Loss value and its derivatives with respect to the distances.
struct LossValue {
  double loss = 0.0;
  double grad_pos = 0.0;
  Vec grad_neg;
};

/// -log softmax(-D)[positive], via log-sum-exp.
LossValue loss_cls(double d_pos, std::span<const double> d_neg);
/// D+ + mean_j max(0, margin - D-_j)
LossValue loss_contrastive(double d_pos, std::span<const double> d_neg, double margin);
/// mean_j max(0, D+ - D-_j + margin)
LossValue loss_triplet(double d_pos, std::span<const double> d_neg, double margin);
LossValue episode_loss_from_distances(const LossConfig& cfg, double d_pos,
                                      std::span<const double> d_neg);

struct EpisodeDistances {
  double positive = 0.0;
  Vec negatives;
};

/// Forward-only distances for an episode (embeds every involved item).
EpisodeDistances episode_distances(const Dataset& dataset, const Episode& episode,
                                   const ModelParams& params, MetricVariant variant);

/// End-to-end episode loss. When `grads` is non-null the gradient of the
/// loss with respect to every parameter is accumulated into it.
double episode_loss(const Dataset& dataset, const Episode& episode, const ModelParams& params,
                    MetricVariant variant, const LossConfig& loss, ModelParams* grads = nullptr);

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double learning_rate = 0.0;
  std::optional<double> validation_recall;
};

struct TrainConfig {
  MetricVariant variant = MetricVariant::full;
  LossConfig loss;
  std::size_t K = 10;
  std::size_t batch_size = 32;
  std::size_t epochs = 200;
  double learning_rate = 0.001;
  double momentum = 0.95;
  double decay_factor = 0.2;
  std::size_t decay_every = 300;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  /// Run `validator` after every this many epochs (0 disables).
  std::size_t validate_every = 0;
  std::function<double(const ModelParams&)> validator;
  /// Called after each epoch with the log record; may be empty.
  std::function<void(const EpochLog&)> on_epoch;

  void validate() const;
  double learning_rate_at(std::size_t epoch) const;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
  bool diverged = false;
  std::string message;
};

/// Initial parameters for a given train seed.
ModelParams initial_params(const ModelDims& dims, std::uint64_t seed);

/// Jointly trains embedding and metric parameters with SGD + momentum.
/// Each epoch has ceil(users / batch_size) batches of batch_size episodes;
/// the batch loss is the mean episode loss. On a non-finite loss or
/// gradient the result carries the parameters from the end of the last
/// finished epoch and diverged = true.
TrainResult train(const Dataset& dataset, const ModelDims& dims, const TrainConfig& config);
TrainResult train(const Dataset& dataset, ModelParams init, const TrainConfig& config);

std::string epoch_log_line(const EpochLog& rec);

}  // namespace i2s
