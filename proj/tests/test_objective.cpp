#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "i2s/objective.hpp"

using namespace i2s;

namespace {

SynthSpec tiny_spec(std::size_t users, std::size_t posts) {
  SynthSpec s;
  s.num_users = users;
  s.num_test_users = 1;
  s.posts_per_user = posts;
  s.d_im = 3;
  s.d_w = 2;
  s.seed = 5;
  return s;
}

double oracle_cls(double pos, const Vec& neg) {
  double z = std::exp(-pos);
  for (double d : neg) z += std::exp(-d);
  return -std::log(std::exp(-pos) / z);
}

}  // namespace

TEST(SampleEpisode, InvariantsHoldOnEveryDraw) {
  const std::size_t K = 4, m = 3;
  const Dataset data = generate_synthetic(tiny_spec(3, K + 1)).train;  // 2 train users
  ASSERT_EQ(data.users.size(), 2u);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Episode ep = sample_episode(data, K, m, rng);
    ASSERT_EQ(ep.set_posts.size(), K);
    ASSERT_EQ(ep.negatives.size(), m);
    const std::set<std::size_t> distinct(ep.set_posts.begin(), ep.set_posts.end());
    EXPECT_EQ(distinct.size(), K);
    EXPECT_EQ(distinct.count(ep.positive), 0u);
    EXPECT_LT(ep.positive, data.users[ep.user].posts.size());
    for (const auto& n : ep.negatives) {
      EXPECT_NE(n.user, ep.user);
      EXPECT_LT(n.post, data.users[n.user].posts.size());
    }
  }
}

TEST(SampleEpisode, DeterministicForSeed) {
  const Dataset data = generate_synthetic(tiny_spec(6, 8)).train;
  Rng a(7), b(7);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_episode(data, 5, 4, a), sample_episode(data, 5, 4, b));
}

TEST(SampleEpisode, NegativeUsersAreUniform) {
  const Dataset data = generate_synthetic(tiny_spec(6, 4)).train;  // 5 train users
  const std::size_t U = data.users.size();
  std::vector<std::vector<double>> counts(U, std::vector<double>(U, 0.0));
  std::vector<double> per_user(U, 0.0);
  Rng rng(3);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const Episode ep = sample_episode(data, 3, 1, rng);
    counts[ep.user][ep.negatives[0].user] += 1.0;
    per_user[ep.user] += 1.0;
  }
  // Chi-square over the other users, per set user; 3 degrees of freedom each.
  double chi2 = 0.0;
  for (std::size_t u = 0; u < U; ++u) {
    const double expected = per_user[u] / static_cast<double>(U - 1);
    for (std::size_t v = 0; v < U; ++v) {
      if (v == u) continue;
      chi2 += (counts[u][v] - expected) * (counts[u][v] - expected) / expected;
    }
  }
  // 20 degrees of freedom; the 0.999 quantile is about 45.3.
  EXPECT_LT(chi2, 45.3);
  for (double c : per_user) EXPECT_NEAR(c / draws, 1.0 / U, 0.01);
}

TEST(SampleEpisode, TooSmallDatasetThrows) {
  const Dataset data = generate_synthetic(tiny_spec(3, 3)).train;
  Rng rng(1);
  EXPECT_THROW(sample_episode(data, 3, 2, rng), std::invalid_argument);
  Dataset one = data;
  one.users.resize(1);
  EXPECT_THROW(sample_episode(one, 1, 2, rng), std::invalid_argument);
}

TEST(LossCls, Examples) {
  for (std::size_t m : {1u, 2u, 10u, 50u}) {
    const Vec neg(m, 0.7);
    EXPECT_NEAR(loss_cls(0.7, neg).loss, std::log(static_cast<double>(m + 1)), 1e-12);
  }
  EXPECT_NEAR(loss_cls(1.0, Vec{1.0, 1.0}).loss, 1.0986122886681098, 1e-12);
  EXPECT_LT(loss_cls(0.0, Vec(5, 40.0)).loss, 1e-16 * 5 + 1e-12);
  EXPECT_NEAR(loss_cls(1.0, Vec{2.0, 3.0}).loss, std::log(1 + std::exp(-1.0) + std::exp(-2.0)),
              1e-14);
  EXPECT_NEAR(loss_cls(1.0, Vec{2.0, 3.0}).loss, 0.4076059644443803, 1e-14);
}

TEST(LossCls, MatchesOracleAndProbabilitiesSumToOne) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int t = 0; t < 100; ++t) {
    const double pos = u(rng);
    Vec neg(7);
    for (auto& d : neg) d = u(rng);
    const LossValue v = loss_cls(pos, neg);
    EXPECT_NEAR(v.loss, oracle_cls(pos, neg), 1e-12);
    EXPECT_GT(v.loss, 0.0);
    // dL/dD+ = 1 - p+, dL/dD-_j = -p_j.
    double p_sum = 1.0 - v.grad_pos;
    for (double g : v.grad_neg) p_sum -= g;
    EXPECT_NEAR(p_sum, 1.0, 1e-12);
  }
}

TEST(LossCls, MonotoneAndShiftInvariant) {
  const Vec neg{1.5, 2.0, 0.3};
  double prev = loss_cls(0.0, neg).loss;
  for (double pos = 0.25; pos < 5.0; pos += 0.25) {
    const double cur = loss_cls(pos, neg).loss;
    EXPECT_GT(cur, prev);
    prev = cur;
  }
  for (double c : {-3.0, 0.5, 100.0}) {
    Vec shifted = neg;
    for (auto& d : shifted) d += c;
    EXPECT_NEAR(loss_cls(1.0 + c, shifted).loss, loss_cls(1.0, neg).loss, 1e-9);
  }
}

TEST(LossCls, RejectsNonFinite) {
  EXPECT_THROW(loss_cls(std::nan(""), Vec{1.0}), NumericError);
}

TEST(LossContrastive, Examples) {
  EXPECT_EQ(loss_contrastive(0.0, Vec{1.0, 2.0}, 1.0).loss, 0.0);
  EXPECT_NEAR(loss_contrastive(0.5, Vec{0.2}, 1.0).loss, 1.3, 1e-15);
  EXPECT_GE(loss_contrastive(0.0, Vec{5.0}, 1.0).loss, 0.0);
}

TEST(LossTriplet, Examples) {
  EXPECT_EQ(loss_triplet(1.0, Vec{2.0, 2.0}, 1.0).loss, 0.0);
  EXPECT_NEAR(loss_triplet(1.0, Vec{1.0, 3.0}, 1.0).loss, 0.5, 1e-15);
  EXPECT_GE(loss_triplet(0.0, Vec{9.0}, 1.0).loss, 0.0);
}

TEST(LossKinds, NamesRoundTrip) {
  for (auto k : {LossKind::cls, LossKind::contrastive, LossKind::triplet}) {
    EXPECT_EQ(parse_loss_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_loss_kind("hinge"), std::invalid_argument);
}

TEST(EpisodeLoss, MatchesDistancesAndGradientsCheck) {
  const SyntheticData data = generate_synthetic(tiny_spec(4, 6));
  Rng rng(2);
  const Episode ep = sample_episode(data.train, 3, 2, rng);
  ModelDims dims{3, 2, 3, 3};
  const ModelParams params = initial_params(dims, 1);
  const EpisodeDistances d = episode_distances(data.train, ep, params, MetricVariant::full);
  const LossConfig cfg{LossKind::cls, 2, 1.0};
  EXPECT_NEAR(episode_loss(data.train, ep, params, MetricVariant::full, cfg),
              loss_cls(d.positive, d.negatives).loss, 1e-12);
}

TEST(Train, ZeroEpochsReturnsInitialisation) {
  const Dataset data = generate_synthetic(tiny_spec(6, 6)).train;
  ModelDims dims{3, 2, 3, 3};
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.K = 3;
  cfg.loss.m = 2;
  cfg.seed = 9;
  const TrainResult r = train(data, dims, cfg);
  EXPECT_EQ(r.params, initial_params(dims, 9));
  EXPECT_TRUE(r.log.empty());
}

TEST(Train, DeterministicAcrossRunsAndThreadCounts) {
  const Dataset data = generate_synthetic(tiny_spec(8, 8)).train;
  ModelDims dims{3, 2, 4, 4};
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.K = 4;
  cfg.loss.m = 3;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.01;
  cfg.seed = 4;
  const TrainResult a = train(data, dims, cfg);
  const TrainResult b = train(data, dims, cfg);
  cfg.threads = 3;
  const TrainResult c = train(data, dims, cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.params, c.params);
  ASSERT_EQ(a.log.size(), 3u);
  EXPECT_EQ(a.log.back().mean_loss, c.log.back().mean_loss);
  EXPECT_NE(a.params, initial_params(dims, 4));
}

TEST(Train, LearningRateDecaysStepwise) {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.decay_factor = 0.2;
  cfg.decay_every = 100;
  EXPECT_DOUBLE_EQ(cfg.learning_rate_at(0), 0.01);
  EXPECT_DOUBLE_EQ(cfg.learning_rate_at(99), 0.01);
  EXPECT_DOUBLE_EQ(cfg.learning_rate_at(100), 0.002);
  EXPECT_DOUBLE_EQ(cfg.learning_rate_at(250), 0.0004);
}

TEST(Train, LossHalvesOnSeparableData) {
  SynthSpec s;
  s.num_users = 60;
  s.num_test_users = 10;
  s.posts_per_user = 12;
  s.num_styles = 50;
  s.min_styles_per_user = s.max_styles_per_user = 1;
  s.d_im = 8;
  s.d_w = 4;
  s.noise_scale = 0.3;
  s.outlier_rate = 0.0;
  s.missing_modality_rate = 0.0;
  s.seed = 3;
  const Dataset data = generate_synthetic(s).train;
  TrainConfig cfg;
  cfg.variant = MetricVariant::avg;
  cfg.epochs = 50;
  cfg.K = 5;
  cfg.loss.m = 20;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.01;
  cfg.seed = 1;
  const TrainResult r = train(data, ModelDims{8, 4, 8, 8}, cfg);
  ASSERT_FALSE(r.diverged);
  EXPECT_LE(r.log.back().mean_loss, 0.5 * r.log.front().mean_loss)
      << "first " << r.log.front().mean_loss << " last " << r.log.back().mean_loss;
}

TEST(Train, DivergenceReturnsLastGoodParameters) {
  const Dataset data = generate_synthetic(tiny_spec(8, 8)).train;
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.K = 4;
  cfg.loss.m = 3;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e6;
  cfg.variant = MetricVariant::avg;
  const TrainResult r = train(data, ModelDims{3, 2, 4, 4}, cfg);
  EXPECT_TRUE(r.diverged);
  EXPECT_TRUE(r.params.all_finite());
  EXPECT_FALSE(r.message.empty());
}

TEST(EpochLog, JsonLine) {
  EpochLog rec{3, 1.5, 0.01, 0.25};
  EXPECT_EQ(epoch_log_line(rec), R"({"epoch":3,"mean_loss":1.5,"lr":0.01,"val_recall":0.25})");
  rec.validation_recall.reset();
  EXPECT_EQ(epoch_log_line(rec), R"({"epoch":3,"mean_loss":1.5,"lr":0.01})");
}
