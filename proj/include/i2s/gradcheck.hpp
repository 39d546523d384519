// End-to-end finite-difference checks of the hand-written backward passes.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "i2s/metric.hpp"
#include "i2s/model.hpp"
#include "i2s/objective.hpp"

namespace i2s {

struct GradCheckCase {
  std::string label;          // e.g. "full/cls"
  MetricVariant variant;
  LossKind loss;
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t coordinates = 0;
};

struct GradCheckSuiteConfig {
  ModelDims dims{4, 4, 4, 4};
  std::size_t K = 3;
  std::size_t m = 2;
  double epsilon = 1e-5;
  std::uint64_t seed = 7;
};

/// Checks d(loss)/d(every parameter) for every metric variant under the cls
/// loss and for the contrastive and triplet losses under the full metric.
std::vector<GradCheckCase> run_gradient_checks(const GradCheckSuiteConfig& config);

/// Checks one (variant, loss) pair on one episode.
GradCheckCase check_episode_gradients(const Dataset& dataset, const Episode& episode,
                                      const ModelParams& params, MetricVariant variant,
                                      const LossConfig& loss, double epsilon);

}  // namespace i2s
