#include "i2s/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "i2s/parallel.hpp"

namespace i2s {

void EvalProtocol::validate() const {
  if (n < 1) throw std::invalid_argument("eval: n must be >= 1");
  if (trials < 1) throw std::invalid_argument("eval: trials must be >= 1");
  if (ks.empty()) throw std::invalid_argument("eval: no cutoffs");
  if (!std::is_sorted(ks.begin(), ks.end()) || ks.front() < 1) {
    throw std::invalid_argument("eval: cutoffs must be positive and ascending");
  }
}

namespace {

std::vector<std::size_t> ranked_order(const Vec& dist, const std::vector<std::string>& ids) {
  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return ids[a] < ids[b];
  });
  return order;
}

Vec pool_distances(const PostSet& set, std::span<const EmbeddedItem> pool,
                   const MetricParams& params, MetricVariant variant) {
  const SetDistance metric(set.features(), params, variant);
  Vec d(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) d[i] = metric.distance(pool[i].f);
  return d;
}

}  // namespace

std::vector<std::string> rank_pool(const PostSet& set, std::span<const EmbeddedItem> pool,
                                   const MetricParams& params, MetricVariant variant) {
  if (pool.empty()) throw std::invalid_argument("rank_pool: empty pool");
  const Vec d = pool_distances(set, pool, params, variant);
  std::vector<std::string> ids;
  for (const auto& p : pool) ids.push_back(p.item_id);
  std::vector<std::string> out;
  for (auto i : ranked_order(d, ids)) out.push_back(ids[i]);
  return out;
}

std::vector<Recommendation> recommend(const PostSet& set, std::span<const EmbeddedItem> pool,
                                      const MetricParams& params, MetricVariant variant,
                                      std::size_t top_k, std::vector<std::string>* warnings) {
  if (top_k == 0) return {};
  if (pool.empty()) throw std::invalid_argument("recommend: empty pool");
  if (top_k > pool.size()) {
    if (warnings) {
      warnings->push_back("top_k " + std::to_string(top_k) + " exceeds pool size " +
                          std::to_string(pool.size()) + "; clamped");
    }
    top_k = pool.size();
  }
  const Vec d = pool_distances(set, pool, params, variant);
  std::vector<std::string> ids;
  for (const auto& p : pool) ids.push_back(p.item_id);
  const auto order = ranked_order(d, ids);
  std::vector<Recommendation> out;
  for (std::size_t r = 0; r < top_k; ++r) out.push_back({ids[order[r]], d[order[r]]});
  return out;
}

EvalReport recall_at_k(const Dataset& users, const std::vector<PoolItem>& pool,
                       const PoolScorer& scorer, const EvalProtocol& protocol,
                       std::size_t threads) {
  protocol.validate();
  if (pool.empty()) throw std::invalid_argument("recall_at_k: empty pool");
  EvalReport report;
  report.ks = protocol.ks;
  report.pool_size = pool.size();

  std::unordered_map<std::string, std::size_t> held_out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!pool[i].owner.empty()) held_out.emplace(pool[i].owner, i);
  }
  std::vector<std::string> ids;
  for (const auto& p : pool) ids.push_back(p.item.item_id);

  struct Eligible {
    std::size_t user;
    std::size_t target;
  };
  std::vector<Eligible> eligible;
  for (std::size_t u = 0; u < users.users.size(); ++u) {
    const auto& rec = users.users[u];
    auto it = held_out.find(rec.user_id);
    if (it == held_out.end()) {
      ++report.skipped;
      report.warnings.push_back("user " + rec.user_id + " has no held-out pool item; skipped");
    } else if (rec.posts.size() < protocol.n) {
      ++report.skipped;
      report.warnings.push_back("user " + rec.user_id + " has " +
                                std::to_string(rec.posts.size()) + " posts < n = " +
                                std::to_string(protocol.n) + "; skipped");
    } else {
      eligible.push_back({u, it->second});
    }
  }
  report.users = eligible.size();
  report.recall.assign(protocol.ks.size(), 0.0);
  if (eligible.empty()) return report;

  const std::size_t jobs = protocol.trials * eligible.size();
  std::vector<std::size_t> ranks(jobs);
  parallel_for(jobs, threads, [&](std::size_t job) {
    const std::size_t trial = job / eligible.size();
    const Eligible& e = eligible[job % eligible.size()];
    std::seed_seq seq{protocol.seed, std::uint64_t{trial}, std::uint64_t{e.user}};
    Rng rng(seq);
    const std::size_t n_posts = users.users[e.user].posts.size();
    std::vector<std::size_t> idx(n_posts);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < protocol.n; ++i) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(i, n_posts - 1)(rng);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(protocol.n);
    const Vec d = scorer(e.user, idx);
    if (d.size() != pool.size()) throw std::logic_error("scorer returned wrong pool size");
    const double dt = d[e.target];
    std::size_t rank = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d[i] < dt || (d[i] == dt && ids[i] < ids[e.target])) ++rank;
    }
    ranks[job] = rank;
  });

  for (std::size_t trial = 0; trial < protocol.trials; ++trial) {
    Vec row(protocol.ks.size(), 0.0);
    for (std::size_t k = 0; k < protocol.ks.size(); ++k) {
      std::size_t hits = 0;
      for (std::size_t u = 0; u < eligible.size(); ++u) {
        if (ranks[trial * eligible.size() + u] < protocol.ks[k]) ++hits;
      }
      row[k] = static_cast<double>(hits) / static_cast<double>(eligible.size());
      report.recall[k] += row[k];
    }
    report.per_trial.push_back(std::move(row));
  }
  for (auto& r : report.recall) r /= static_cast<double>(protocol.trials);
  return report;
}

std::vector<EmbeddedItem> embed_pool(const std::vector<PoolItem>& pool, const ModelParams& params) {
  std::vector<EmbeddedItem> out;
  out.reserve(pool.size());
  for (const auto& p : pool) out.push_back(embed_item(p.item, params.embedding));
  return out;
}

EvalReport recall_at_k(const Dataset& users, const std::vector<PoolItem>& pool,
                       const ModelParams& params, MetricVariant variant,
                       const EvalProtocol& protocol, std::size_t threads) {
  const auto pool_emb = embed_pool(pool, params);
  std::vector<std::vector<Vec>> post_emb(users.users.size());
  for (std::size_t u = 0; u < users.users.size(); ++u) {
    for (const auto& p : users.users[u].posts) {
      post_emb[u].push_back(embed_item(p, params.embedding).f);
    }
  }
  PoolScorer scorer = [&](std::size_t user, std::span<const std::size_t> posts) {
    std::vector<Vec> set;
    for (auto p : posts) set.push_back(post_emb[user][p]);
    const SetDistance metric(set, params.metric, variant);
    Vec d(pool_emb.size());
    for (std::size_t i = 0; i < pool_emb.size(); ++i) d[i] = metric.distance(pool_emb[i].f);
    return d;
  };
  return recall_at_k(users, pool, scorer, protocol, threads);
}

std::string report_records(const EvalReport& report) {
  std::string out;
  for (std::size_t k = 0; k < report.ks.size(); ++k) {
    nlohmann::ordered_json j;
    j["k"] = report.ks[k];
    j["recall"] = report.recall[k];
    Vec trials;
    for (const auto& row : report.per_trial) trials.push_back(row[k]);
    j["per_trial"] = trials;
    out += j.dump() + "\n";
  }
  nlohmann::ordered_json s;
  s["pool_size"] = report.pool_size;
  s["users"] = report.users;
  s["skipped"] = report.skipped;
  s["trials"] = report.per_trial.size();
  out += s.dump() + "\n";
  return out;
}

std::string report_table(const EvalReport& report) {
  std::ostringstream os;
  os << "users " << report.users << "  skipped " << report.skipped << "  pool "
     << report.pool_size << "  trials " << report.per_trial.size() << "\n";
  for (std::size_t k = 0; k < report.ks.size(); ++k) os << "  Recall@" << std::left << std::setw(6) << report.ks[k];
  os << "\n";
  for (std::size_t k = 0; k < report.ks.size(); ++k) {
    os << "  " << std::fixed << std::setprecision(4) << std::setw(12) << report.recall[k];
  }
  os << "\n";
  return os.str();
}

}  // namespace i2s
