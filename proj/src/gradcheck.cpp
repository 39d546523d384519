#include "i2s/gradcheck.hpp"

#include "i2s/features.hpp"

namespace i2s {

GradCheckCase check_episode_gradients(const Dataset& dataset, const Episode& episode,
                                      const ModelParams& params, MetricVariant variant,
                                      const LossConfig& loss, double epsilon) {
  ModelParams work = params;
  auto closure = [&](const std::vector<Tensor>& values) {
    work.assign(values);
    ModelParams grads = work.zeros_like();
    LossWithGrad out;
    out.loss = episode_loss(dataset, episode, work, variant, loss, &grads);
    out.grads = grads.snapshot();
    return out;
  };
  const GradCheckResult r = grad_check(closure, params.snapshot(), epsilon);
  GradCheckCase c;
  c.label = to_string(variant) + "/" + to_string(loss.kind);
  c.variant = variant;
  c.loss = loss.kind;
  c.max_relative_error = r.max_relative_error;
  c.worst_parameter = params.names()[r.worst_tensor] + "[" + std::to_string(r.worst_index) + "]";
  c.coordinates = r.coordinates;
  return c;
}

std::vector<GradCheckCase> run_gradient_checks(const GradCheckSuiteConfig& config) {
  SynthSpec spec;
  spec.num_users = 4;
  spec.num_test_users = 1;
  spec.posts_per_user = config.K + 2;
  spec.num_styles = 3;
  spec.min_styles_per_user = 1;
  spec.max_styles_per_user = 2;
  spec.d_im = config.dims.d_im;
  spec.d_w = config.dims.d_w;
  spec.max_words_per_post = 3;
  spec.outlier_rate = 0.0;
  spec.missing_modality_rate = 0.0;
  spec.seed = config.seed;
  const SyntheticData data = generate_synthetic(spec);

  Rng rng(config.seed);
  const Episode episode = sample_episode(data.train, config.K, config.m, rng);
  const ModelParams params = initial_params(config.dims, config.seed);

  std::vector<GradCheckCase> out;
  for (auto v : {MetricVariant::avg, MetricVariant::nn, MetricVariant::weighted_v,
                 MetricVariant::weighted_uv, MetricVariant::avg_specific, MetricVariant::full}) {
    out.push_back(check_episode_gradients(data.train, episode, params, v,
                                          LossConfig{LossKind::cls, config.m, 1.0},
                                          config.epsilon));
  }
  // Margins large enough that every hinge term is active at initialisation.
  for (auto k : {LossKind::contrastive, LossKind::triplet}) {
    out.push_back(check_episode_gradients(data.train, episode, params, MetricVariant::full,
                                          LossConfig{k, config.m, 50.0}, config.epsilon));
  }
  return out;
}

}  // namespace i2s
