#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "i2s/numcore.hpp"

using namespace i2s;

namespace {

// Plain triple-loop oracle for a relu MLP with a linear last layer.
Vec naive_mlp(const Mlp& mlp, const Vec& x) {
  Vec cur = x;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    const Tensor& w = mlp.weights[l];
    Vec next(w.rows(), 0.0);
    for (std::size_t o = 0; o < w.rows(); ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < w.cols(); ++i) acc += w.at(o, i) * cur[i];
      next[o] = acc + mlp.biases[l][o];
      if (l + 1 < mlp.weights.size()) next[o] = std::max(0.0, next[o]);
    }
    cur = next;
  }
  return cur;
}

Vec random_vec(std::size_t n, Rng& rng) {
  std::normal_distribution<double> d;
  Vec v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST(Mlp, ZeroParametersGiveZeroOutput) {
  const Mlp mlp = Mlp::zeros({{3, 2}});
  const Vec y = mlp_forward(mlp, Vec{1.0, -2.0, 5.0});
  EXPECT_EQ(y, (Vec{0.0, 0.0}));
}

TEST(Mlp, IdentityWeights) {
  Mlp mlp = Mlp::zeros({{2, 2}});
  mlp.weights[0].at(0, 0) = 1.0;
  mlp.weights[0].at(1, 1) = 1.0;
  EXPECT_EQ(mlp_forward(mlp, Vec{1.0, 2.0}), (Vec{1.0, 2.0}));
}

TEST(Mlp, MatchesNaiveOracle) {
  Rng rng(3);
  const Mlp mlp = Mlp::glorot({{5, 7, 3}}, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec x = random_vec(5, rng);
    const Vec got = mlp_forward(mlp, x);
    const Vec want = naive_mlp(mlp, x);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Mlp, ZeroSigmoidIsHalf) {
  const Mlp mlp = Mlp::zeros({{4, 3, 2}, Activation::relu, FinalActivation::sigmoid});
  for (double y : mlp_forward(mlp, Vec{1, 2, 3, 4})) EXPECT_EQ(y, 0.5);
}

TEST(Mlp, InputWidthMismatchThrows) {
  const Mlp mlp = Mlp::zeros({{3, 2}});
  EXPECT_THROW(mlp_forward(mlp, Vec{1.0, 2.0}), ShapeError);
}

TEST(Mlp, GlorotBounds) {
  Rng rng(1);
  const Mlp mlp = Mlp::glorot({{6, 4}}, rng);
  const double bound = std::sqrt(6.0 / 10.0);
  for (double w : mlp.weights[0].values()) EXPECT_LE(std::abs(w), bound);
  for (double b : mlp.biases[0].values()) EXPECT_LE(std::abs(b), bound);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  Rng rng(11);
  for (auto fin : {FinalActivation::none, FinalActivation::sigmoid, FinalActivation::softmax}) {
    const Mlp mlp = Mlp::glorot({{4, 5, 3}, Activation::tanh, fin}, rng);
    const Vec x = random_vec(4, rng);
    const Vec gy = random_vec(3, rng);
    auto closure = [&](const std::vector<Tensor>& p) {
      Mlp m = mlp;
      m.weights = {p[0], p[1]};
      m.biases = {p[2], p[3]};
      MlpTrace tr;
      const Vec y = mlp_forward(m, x, tr);
      Mlp g = Mlp::zeros(m.spec);
      mlp_backward(m, tr, gy, g);
      return LossWithGrad{dot(y, gy), {g.weights[0], g.weights[1], g.biases[0], g.biases[1]}};
    };
    const auto r = grad_check(
        closure, {mlp.weights[0], mlp.weights[1], mlp.biases[0], mlp.biases[1]}, 1e-5);
    EXPECT_LT(r.max_relative_error, 1e-7);
  }
}

TEST(Mlp, InputGradientMatchesFiniteDifferences) {
  Rng rng(5);
  const Mlp mlp = Mlp::glorot({{3, 4, 2}}, rng);
  const Vec x = random_vec(3, rng);
  const Vec gy{0.7, -1.3};
  MlpTrace tr;
  mlp_forward(mlp, x, tr);
  Mlp g = Mlp::zeros(mlp.spec);
  const Vec gx = mlp_backward(mlp, tr, gy, g);
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += 1e-6;
    xm[i] -= 1e-6;
    const double num = (dot(mlp_forward(mlp, xp), gy) - dot(mlp_forward(mlp, xm), gy)) / 2e-6;
    EXPECT_NEAR(gx[i], num, 1e-7);
  }
}

TEST(Softmax, Examples) {
  EXPECT_EQ(softmax(Vec{0.0, 0.0}), (Vec{0.5, 0.5}));
  EXPECT_EQ(softmax(Vec{1000.0, 1000.0}), (Vec{0.5, 0.5}));
  const Vec y = softmax(Vec{std::log(1.0), std::log(3.0)});
  EXPECT_NEAR(y[0], 0.25, 1e-15);
  EXPECT_NEAR(y[1], 0.75, 1e-15);
}

TEST(Softmax, SumsToOneOnRandomTensors) {
  Rng rng(9);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x({3, 4});
    for (auto& v : x.values()) v = u(rng);
    for (std::size_t axis : {0u, 1u}) {
      const Tensor y = softmax(x, axis);
      const std::size_t outer = axis == 0 ? 4 : 3;
      const std::size_t inner = axis == 0 ? 3 : 4;
      for (std::size_t o = 0; o < outer; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < inner; ++i) s += axis == 0 ? y.at(i, o) : y.at(o, i);
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(Softmax, BackwardMatchesFiniteDifferences) {
  const Vec x{0.3, -1.2, 2.0};
  const Vec gy{1.0, 0.5, -2.0};
  const Vec g = softmax_backward(softmax(x), gy);
  for (std::size_t i = 0; i < 3; ++i) {
    Vec xp = x, xm = x;
    xp[i] += 1e-6;
    xm[i] -= 1e-6;
    EXPECT_NEAR(g[i], (dot(softmax(xp), gy) - dot(softmax(xm), gy)) / 2e-6, 1e-8);
  }
}

TEST(Scalar, LogSumExpAndSoftplusAreStable) {
  EXPECT_NEAR(log_sum_exp(Vec{1000.0, 1000.0}), 1000.0 + std::log(2.0), 1e-12);
  EXPECT_NEAR(softplus(800.0), 800.0, 1e-12);
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_TRUE(std::isfinite(sigmoid(-1000.0)));
}

TEST(Sgd, PlainStep) {
  Tensor p = Tensor::from_vector({1.0});
  const Tensor g = Tensor::from_vector({2.0});
  OptimizerState st{0.1, 0.0, {}};
  Tensor* ps[] = {&p};
  const Tensor* gs[] = {&g};
  sgd_step(ps, gs, st);
  EXPECT_NEAR(p[0], 0.8, 1e-15);
}

TEST(Sgd, ZeroGradientIsFixedPoint) {
  Tensor p = Tensor::from_vector({1.5, -2.0});
  const Tensor g = Tensor::from_vector({0.0, 0.0});
  OptimizerState st{0.1, 0.95, {}};
  Tensor* ps[] = {&p};
  const Tensor* gs[] = {&g};
  sgd_step(ps, gs, st);
  EXPECT_EQ(p, Tensor::from_vector({1.5, -2.0}));
}

TEST(Sgd, TwoMomentumSteps) {
  const double lr = 0.01, g0 = 3.0, p0 = 2.0;
  Tensor p = Tensor::from_vector({p0});
  const Tensor g = Tensor::from_vector({g0});
  OptimizerState st{lr, 0.95, {}};
  Tensor* ps[] = {&p};
  const Tensor* gs[] = {&g};
  sgd_step(ps, gs, st);
  sgd_step(ps, gs, st);
  EXPECT_NEAR(p[0], p0 - lr * g0 - lr * 1.95 * g0, 1e-14);
}

TEST(Sgd, RejectsNonFiniteGradient) {
  Tensor p = Tensor::from_vector({1.0});
  const Tensor g = Tensor::from_vector({std::numeric_limits<double>::quiet_NaN()});
  OptimizerState st;
  Tensor* ps[] = {&p};
  const Tensor* gs[] = {&g};
  EXPECT_THROW(sgd_step(ps, gs, st), NumericError);
}

TEST(GradCheck, QuadraticIsExact) {
  auto closure = [](const std::vector<Tensor>& p) {
    Tensor g({1}, 2.0 * p[0][0]);
    return LossWithGrad{p[0][0] * p[0][0], {g}};
  };
  const auto r = grad_check(closure, {Tensor::from_vector({3.0})});
  EXPECT_LT(r.max_relative_error, 1e-8);
  EXPECT_EQ(r.coordinates, 1u);
}

TEST(GradCheck, DetectsDoubledGradient) {
  auto closure = [](const std::vector<Tensor>& p) {
    Tensor g({1}, 2.0 * 2.0 * p[0][0]);
    return LossWithGrad{p[0][0] * p[0][0], {g}};
  };
  const auto r = grad_check(closure, {Tensor::from_vector({3.0})});
  EXPECT_NEAR(r.max_relative_error, 0.5, 1e-6);
}

TEST(GradCheck, RejectsEpsilonOutsideRange) {
  auto closure = [](const std::vector<Tensor>& p) { return LossWithGrad{0.0, p}; };
  EXPECT_THROW(grad_check(closure, {Tensor::from_vector({1.0})}, 1e-9), std::invalid_argument);
}
