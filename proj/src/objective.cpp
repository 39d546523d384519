#include "i2s/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "i2s/parallel.hpp"

namespace i2s {

Episode sample_episode(const Dataset& dataset, std::size_t K, std::size_t m, Rng& rng) {
  if (K == 0 || m == 0) throw std::invalid_argument("sample_episode: K and m must be positive");
  if (dataset.users.size() < 2) {
    throw std::invalid_argument("sample_episode: need at least two users for negatives");
  }
  std::vector<std::size_t> eligible;
  for (std::size_t u = 0; u < dataset.users.size(); ++u) {
    if (dataset.users[u].posts.size() >= K + 1) eligible.push_back(u);
  }
  if (eligible.empty()) {
    throw std::invalid_argument("sample_episode: no user has K+1 = " + std::to_string(K + 1) +
                                " posts");
  }
  Episode ep;
  ep.user = eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)];
  const std::size_t n_posts = dataset.users[ep.user].posts.size();

  // Partial Fisher-Yates: first K entries form the set, entry K the positive.
  std::vector<std::size_t> order(n_posts);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i <= K; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, n_posts - 1)(rng);
    std::swap(order[i], order[j]);
  }
  ep.set_posts.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(K));
  ep.positive = order[K];

  const std::size_t others = dataset.users.size() - 1;
  std::uniform_int_distribution<std::size_t> pick_user(0, others - 1);
  for (std::size_t j = 0; j < m; ++j) {
    std::size_t u = pick_user(rng);
    if (u >= ep.user) ++u;
    const auto& posts = dataset.users[u].posts;
    if (posts.empty()) throw std::invalid_argument("sample_episode: user without posts");
    const std::size_t p = std::uniform_int_distribution<std::size_t>(0, posts.size() - 1)(rng);
    ep.negatives.push_back(PostRef{u, p});
  }
  return ep;
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::cls: return "cls";
    case LossKind::contrastive: return "contrastive";
    case LossKind::triplet: return "triplet";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  for (auto k : {LossKind::cls, LossKind::contrastive, LossKind::triplet}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown loss '" + name + "' (cls, contrastive, triplet)");
}

void LossConfig::validate() const {
  if (m < 1) throw std::invalid_argument("loss: m must be >= 1");
  if (kind != LossKind::cls && !(margin > 0.0)) {
    throw std::invalid_argument("loss: margin must be positive");
  }
}

namespace {

void require_finite(double d_pos, std::span<const double> d_neg) {
  if (!std::isfinite(d_pos) ||
      !std::all_of(d_neg.begin(), d_neg.end(), [](double d) { return std::isfinite(d); })) {
    throw NumericError("loss: non-finite distance");
  }
}

}  // namespace

LossValue loss_cls(double d_pos, std::span<const double> d_neg) {
  require_finite(d_pos, d_neg);
  Vec logits(d_neg.size() + 1);
  logits[0] = -d_pos;
  for (std::size_t j = 0; j < d_neg.size(); ++j) logits[j + 1] = -d_neg[j];
  LossValue out;
  out.loss = d_pos + log_sum_exp(logits);
  const Vec p = softmax(logits);
  // dL/dD_k = [k = positive] - p_k
  out.grad_pos = 1.0 - p[0];
  out.grad_neg.resize(d_neg.size());
  for (std::size_t j = 0; j < d_neg.size(); ++j) out.grad_neg[j] = -p[j + 1];
  return out;
}

LossValue loss_contrastive(double d_pos, std::span<const double> d_neg, double margin) {
  require_finite(d_pos, d_neg);
  if (d_neg.empty()) throw std::invalid_argument("contrastive loss needs negatives");
  const double inv_m = 1.0 / static_cast<double>(d_neg.size());
  LossValue out;
  out.loss = d_pos;
  out.grad_pos = 1.0;
  out.grad_neg.assign(d_neg.size(), 0.0);
  for (std::size_t j = 0; j < d_neg.size(); ++j) {
    const double gap = margin - d_neg[j];
    if (gap > 0.0) {
      out.loss += inv_m * gap;
      out.grad_neg[j] = -inv_m;
    }
  }
  return out;
}

LossValue loss_triplet(double d_pos, std::span<const double> d_neg, double margin) {
  require_finite(d_pos, d_neg);
  if (d_neg.empty()) throw std::invalid_argument("triplet loss needs negatives");
  const double inv_m = 1.0 / static_cast<double>(d_neg.size());
  LossValue out;
  out.grad_neg.assign(d_neg.size(), 0.0);
  for (std::size_t j = 0; j < d_neg.size(); ++j) {
    const double h = d_pos - d_neg[j] + margin;
    if (h > 0.0) {
      out.loss += inv_m * h;
      out.grad_pos += inv_m;
      out.grad_neg[j] = -inv_m;
    }
  }
  return out;
}

LossValue episode_loss_from_distances(const LossConfig& cfg, double d_pos,
                                      std::span<const double> d_neg) {
  switch (cfg.kind) {
    case LossKind::cls: return loss_cls(d_pos, d_neg);
    case LossKind::contrastive: return loss_contrastive(d_pos, d_neg, cfg.margin);
    case LossKind::triplet: return loss_triplet(d_pos, d_neg, cfg.margin);
  }
  throw std::invalid_argument("unknown loss kind");
}

namespace {

const ItemFeatures& post_at(const Dataset& ds, std::size_t user, std::size_t post) {
  return ds.users.at(user).posts.at(post);
}

}  // namespace

EpisodeDistances episode_distances(const Dataset& dataset, const Episode& episode,
                                   const ModelParams& params, MetricVariant variant) {
  std::vector<Vec> set;
  for (auto p : episode.set_posts) {
    set.push_back(embed_item(post_at(dataset, episode.user, p), params.embedding).f);
  }
  const SetDistance metric(set, params.metric, variant);
  EpisodeDistances out;
  out.positive =
      metric.distance(embed_item(post_at(dataset, episode.user, episode.positive), params.embedding).f);
  for (const auto& ref : episode.negatives) {
    out.negatives.push_back(
        metric.distance(embed_item(post_at(dataset, ref.user, ref.post), params.embedding).f));
  }
  return out;
}

double episode_loss(const Dataset& dataset, const Episode& episode, const ModelParams& params,
                    MetricVariant variant, const LossConfig& loss, ModelParams* grads) {
  if (!grads) {
    const auto d = episode_distances(dataset, episode, params, variant);
    return episode_loss_from_distances(loss, d.positive, d.negatives).loss;
  }

  const std::size_t K = episode.set_posts.size();
  const std::size_t m = episode.negatives.size();
  std::vector<EmbedTrace> set_traces(K);
  std::vector<Vec> set(K);
  for (std::size_t i = 0; i < K; ++i) {
    set[i] = embed_item(post_at(dataset, episode.user, episode.set_posts[i]), params.embedding,
                        set_traces[i]);
  }
  // Queries: index 0 is the positive, then the negatives.
  std::vector<EmbedTrace> q_traces(m + 1);
  std::vector<Vec> queries(m + 1);
  queries[0] = embed_item(post_at(dataset, episode.user, episode.positive), params.embedding,
                          q_traces[0]);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& ref = episode.negatives[j];
    queries[j + 1] = embed_item(post_at(dataset, ref.user, ref.post), params.embedding,
                                q_traces[j + 1]);
  }

  const SetDistance metric(set, params.metric, variant);
  std::vector<QueryTrace> d_traces(m + 1);
  Vec d_neg(m);
  const double d_pos = metric.distance(queries[0], d_traces[0]);
  for (std::size_t j = 0; j < m; ++j) d_neg[j] = metric.distance(queries[j + 1], d_traces[j + 1]);

  const LossValue lv = episode_loss_from_distances(loss, d_pos, d_neg);
  if (!std::isfinite(lv.loss)) throw NumericError("episode loss is not finite");

  SetGradients acc = metric.make_gradients();
  for (std::size_t q = 0; q <= m; ++q) {
    const double g = q == 0 ? lv.grad_pos : lv.grad_neg[q - 1];
    if (g == 0.0) continue;
    const Vec g_query = metric.backward_query(queries[q], d_traces[q], g, acc);
    embed_item_backward(params.embedding, q_traces[q], g_query, grads->embedding);
  }
  std::vector<Vec> g_set(K, Vec(params.dims.d_emb, 0.0));
  metric.backward_set(acc, grads->metric, g_set);
  for (std::size_t i = 0; i < K; ++i) {
    embed_item_backward(params.embedding, set_traces[i], g_set[i], grads->embedding);
  }
  return lv.loss;
}

void TrainConfig::validate() const {
  loss.validate();
  if (K == 0) throw std::invalid_argument("train: K must be positive");
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("train: momentum must lie in [0, 1)");
  }
  if (!(decay_factor > 0.0)) throw std::invalid_argument("train: decay factor must be positive");
  if (decay_every == 0) throw std::invalid_argument("train: decay_every must be positive");
}

double TrainConfig::learning_rate_at(std::size_t epoch) const {
  return learning_rate * std::pow(decay_factor, static_cast<double>(epoch / decay_every));
}

ModelParams initial_params(const ModelDims& dims, std::uint64_t seed) {
  std::seed_seq seq{seed, std::uint64_t{0x1e17}};
  Rng rng(seq);
  return ModelParams::init(dims, rng);
}

TrainResult train(const Dataset& dataset, const ModelDims& dims, const TrainConfig& config) {
  return train(dataset, initial_params(dims, config.seed), config);
}

TrainResult train(const Dataset& dataset, ModelParams init, const TrainConfig& config) {
  config.validate();
  TrainResult result;
  result.params = std::move(init);
  ModelParams& params = result.params;
  ModelParams last_good = params;

  std::seed_seq seq{config.seed, std::uint64_t{0x5a4d}};
  Rng rng(seq);
  OptimizerState opt;
  opt.momentum = config.momentum;

  const std::size_t batches =
      (dataset.users.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t threads = std::max<std::size_t>(1, config.threads);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    opt.learning_rate = config.learning_rate_at(epoch);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    bool failed = false;
    for (std::size_t b = 0; b < batches && !failed; ++b) {
      std::vector<Episode> episodes;
      for (std::size_t e = 0; e < config.batch_size; ++e) {
        episodes.push_back(sample_episode(dataset, config.K, config.loss.m, rng));
      }
      std::vector<ModelParams> grads(episodes.size(), params.zeros_like());
      std::vector<double> losses(episodes.size(), 0.0);
      std::vector<std::string> errors(episodes.size());
      parallel_for(episodes.size(), threads, [&](std::size_t e) {
        try {
          losses[e] = episode_loss(dataset, episodes[e], params, config.variant, config.loss,
                                   &grads[e]);
        } catch (const NumericError& err) {
          errors[e] = err.what();
        }
      });
      // Fixed-order reduction keeps results independent of the thread count.
      ModelParams total = params.zeros_like();
      double batch_loss = 0.0;
      for (std::size_t e = 0; e < episodes.size(); ++e) {
        if (!errors[e].empty() || !std::isfinite(losses[e])) {
          failed = true;
          result.message = errors[e].empty() ? "non-finite loss" : errors[e];
          break;
        }
        total.add(grads[e]);
        batch_loss += losses[e];
      }
      if (failed) break;
      total.scale(1.0 / static_cast<double>(episodes.size()));
      if (!total.all_finite()) {
        failed = true;
        result.message = "non-finite gradient";
        break;
      }
      auto p = params.tensors();
      const auto g = std::as_const(total).tensors();
      sgd_step(p, g, opt);
      loss_sum += batch_loss / static_cast<double>(episodes.size());
      ++loss_count;
    }
    if (failed || !params.all_finite()) {
      result.diverged = true;
      if (result.message.empty()) result.message = "non-finite parameters";
      result.message = "epoch " + std::to_string(epoch) + ": " + result.message;
      params = last_good;
      return result;
    }
    EpochLog rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    rec.learning_rate = opt.learning_rate;
    if (config.validate_every && config.validator && (epoch + 1) % config.validate_every == 0) {
      rec.validation_recall = config.validator(params);
    }
    if (config.on_epoch) config.on_epoch(rec);
    result.log.push_back(rec);
    last_good = params;
  }
  return result;
}

std::string epoch_log_line(const EpochLog& rec) {
  nlohmann::ordered_json j;
  j["epoch"] = rec.epoch;
  j["mean_loss"] = rec.mean_loss;
  j["lr"] = rec.learning_rate;
  if (rec.validation_recall) j["val_recall"] = *rec.validation_recall;
  return j.dump();
}

}  // namespace i2s
