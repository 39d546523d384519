// All learnable parameters of the recommender, plus helpers to enumerate them
// as named tensors for the optimizer, checkpoints and gradient checks.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "i2s/embedding.hpp"
#include "i2s/metric.hpp"

namespace i2s {

struct ModelParams {
  ModelDims dims;
  EmbeddingParams embedding;
  MetricParams metric;

  static ModelParams init(const ModelDims& dims, Rng& rng);
  static ModelParams zeros(const ModelDims& dims);

  /// Visits every parameter tensor in a fixed order.
  void for_each(const std::function<void(const std::string&, Tensor&)>& f);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& f) const;

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> names() const;
  std::vector<Tensor> snapshot() const;
  void assign(const std::vector<Tensor>& values);

  ModelParams zeros_like() const { return zeros(dims); }
  void add(const ModelParams& other);
  void scale(double factor);
  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.snapshot() == b.snapshot();
  }
};

}  // namespace i2s
