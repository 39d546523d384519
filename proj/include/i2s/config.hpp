// Run configuration shared by the CLI and checkpoints.
//
// Config files are flat `key = value` text; `#` starts a comment. Keys are
// the long flag names without dashes (e.g. `lr = 0.001`).
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "i2s/embedding.hpp"
#include "i2s/evaluation.hpp"
#include "i2s/features.hpp"
#include "i2s/metric.hpp"
#include "i2s/objective.hpp"

namespace i2s {

struct RunConfig {
  ModelDims dims;
  MetricVariant variant = MetricVariant::full;
  LossKind loss = LossKind::cls;
  double margin = 1.0;
  std::size_t K = 10;
  std::size_t m = 50;
  std::size_t n = 10;
  std::size_t batch_size = 32;
  std::size_t epochs = 200;
  std::size_t trials = 50;
  std::vector<std::size_t> ks{1, 10, 25};
  double lr = 0.001;
  double momentum = 0.95;
  double decay_factor = 0.2;
  std::size_t decay_every = 300;
  std::uint64_t data_seed = 1;
  std::uint64_t train_seed = 0;
  std::uint64_t eval_seed = 0;
  std::size_t threads = 1;
  std::size_t validate_every = 0;
  std::string train_path;
  std::string test_path;
  std::string pool_path;
  std::string checkpoint_path;
  std::string report_path;
  std::string log_path;

  void validate() const;

  TrainConfig train_config() const;
  EvalProtocol eval_protocol() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Applies `key = value` pairs; unknown keys or bad values throw
/// std::invalid_argument naming the key.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
void apply_config_text(RunConfig& cfg, const std::string& text);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
std::string config_text(const RunConfig& cfg);
/// Every recognised key, in canonical order.
std::vector<std::string> config_keys();

nlohmann::ordered_json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::ordered_json& j);

}  // namespace i2s
