// Recall@k evaluation against a candidate pool and top-k recommendation.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "i2s/features.hpp"
#include "i2s/metric.hpp"
#include "i2s/model.hpp"

namespace i2s {

struct EvalProtocol {
  std::size_t n = 10;
  std::size_t trials = 50;
  std::vector<std::size_t> ks{1, 10, 25};
  std::uint64_t seed = 0;
  void validate() const;
};

struct EvalReport {
  std::vector<std::size_t> ks;
  Vec recall;                    // averaged over trials, one per k
  std::vector<Vec> per_trial;    // [trial][k]
  std::size_t pool_size = 0;
  std::size_t users = 0;         // users scored
  std::size_t skipped = 0;       // users with < n posts or no held-out item
  std::vector<std::string> warnings;
};

/// Ascending by distance, ties by item_id.
std::vector<std::string> rank_pool(const PostSet& set, std::span<const EmbeddedItem> pool,
                                   const MetricParams& params, MetricVariant variant);

struct Recommendation {
  std::string item_id;
  double distance = 0.0;
};

/// Prefix of rank_pool. top_k larger than the pool is clamped and a warning
/// is appended to `warnings` when given.
std::vector<Recommendation> recommend(const PostSet& set, std::span<const EmbeddedItem> pool,
                                      const MetricParams& params, MetricVariant variant,
                                      std::size_t top_k,
                                      std::vector<std::string>* warnings = nullptr);

/// Scores every pool item for one user given the sampled post indices.
/// Lower is better.
using PoolScorer =
    std::function<Vec(std::size_t user, std::span<const std::size_t> sampled_posts)>;

/// Core protocol: per trial, sample n posts per user (seeded per trial and
/// user), score the pool, and count a hit when the user's held-out item
/// (the pool item whose owner is the user) is within the top k. Ties are
/// broken by item_id.
EvalReport recall_at_k(const Dataset& users, const std::vector<PoolItem>& pool,
                       const PoolScorer& scorer, const EvalProtocol& protocol,
                       std::size_t threads = 1);

/// The same protocol with the learned item-to-set distance as scorer.
EvalReport recall_at_k(const Dataset& users, const std::vector<PoolItem>& pool,
                       const ModelParams& params, MetricVariant variant,
                       const EvalProtocol& protocol, std::size_t threads = 1);

std::vector<EmbeddedItem> embed_pool(const std::vector<PoolItem>& pool, const ModelParams& params);

/// One JSON line per k plus a summary line.
std::string report_records(const EvalReport& report);
/// Human-readable table.
std::string report_table(const EvalReport& report);

}  // namespace i2s
