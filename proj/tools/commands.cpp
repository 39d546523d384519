#include "commands.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <stdexcept>

#include "i2s/checkpoint.hpp"
#include "i2s/evaluation.hpp"
#include "i2s/gradcheck.hpp"
#include "i2s/objective.hpp"

namespace i2s::cli {

namespace {

void require_path(const std::string& path, const char* what) {
  if (path.empty()) throw std::invalid_argument(std::string("missing --") + what);
}

Dataset load_pool_file(const RunConfig& cfg) {
  require_path(cfg.pool_path, "pool");
  return load_pool(cfg.pool_path);
}

}  // namespace

RunConfig resolve_config(const std::optional<std::string>& config_file, const Overrides& overrides) {
  RunConfig cfg;
  bool threads_set = overrides.contains("threads");
  if (config_file) {
    std::ifstream in(*config_file);
    if (!in) throw std::runtime_error("cannot open config " + *config_file);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    apply_config_text(cfg, text);
    if (text.find("threads") != std::string::npos) threads_set = true;
  }
  for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
  if (!threads_set) {
    if (const char* env = std::getenv("I2S_THREADS"); env && *env) {
      apply_setting(cfg, "threads", env);
    }
  }
  cfg.validate();
  return cfg;
}

int cmd_gen_data(const RunConfig& cfg, const SynthSpec& spec_in, std::ostream& out) {
  require_path(cfg.train_path, "train");
  require_path(cfg.test_path, "test");
  require_path(cfg.pool_path, "pool");
  SynthSpec spec = spec_in;
  spec.d_im = cfg.dims.d_im;
  spec.d_w = cfg.dims.d_w;
  spec.seed = cfg.data_seed;
  const SyntheticData data = generate_synthetic(spec);
  save_dataset(data.train, cfg.train_path);
  save_dataset(data.test, cfg.test_path);
  save_pool(data.train.dims, data.pool, cfg.pool_path);
  const auto tr = stat_summary(data.train);
  const auto te = stat_summary(data.test);
  out << "train: " << tr.users << " users, " << tr.posts << " posts -> " << cfg.train_path << "\n"
      << "test:  " << te.users << " users, " << te.posts << " posts -> " << cfg.test_path << "\n"
      << "pool:  " << data.pool.size() << " items -> " << cfg.pool_path << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  require_path(cfg.train_path, "train");
  require_path(cfg.checkpoint_path, "checkpoint");
  const Dataset train_set = load_dataset(cfg.train_path, Split::train);
  if (train_set.dims.d_im != cfg.dims.d_im || train_set.dims.d_w != cfg.dims.d_w) {
    throw std::invalid_argument("train file dimensions (d_im " +
                                std::to_string(train_set.dims.d_im) + ", d_w " +
                                std::to_string(train_set.dims.d_w) +
                                ") disagree with the configuration");
  }
  TrainConfig tc = cfg.train_config();

  std::optional<Dataset> test_set;
  std::optional<Dataset> pool;
  if (cfg.validate_every > 0) {
    require_path(cfg.test_path, "test");
    test_set = load_dataset(cfg.test_path, Split::test);
    pool = load_pool_file(cfg);
    const EvalProtocol protocol = cfg.eval_protocol();
    tc.validator = [&, protocol](const ModelParams& p) {
      const auto rep = recall_at_k(*test_set, pool->pool, p, cfg.variant, protocol, cfg.threads);
      return rep.recall.back();
    };
  }

  const std::string log_path =
      cfg.log_path.empty() ? cfg.checkpoint_path + ".log.jsonl" : cfg.log_path;
  std::ofstream log(log_path);
  if (!log) throw std::runtime_error("cannot write training log " + log_path);
  tc.on_epoch = [&](const EpochLog& rec) {
    const std::string line = epoch_log_line(rec);
    log << line << "\n";
    out << line << "\n";
  };

  const TrainResult result = train(train_set, cfg.dims, tc);
  save_checkpoint(Checkpoint{cfg, result.params}, cfg.checkpoint_path);
  if (result.diverged) {
    out << "training diverged (" << result.message << "); saved last good parameters to "
        << cfg.checkpoint_path << "\n";
    return 3;
  }
  out << "checkpoint -> " << cfg.checkpoint_path << "\nlog -> " << log_path << "\n";
  return 0;
}

namespace {

RunConfig merge_with_checkpoint(const std::optional<std::string>& config_file,
                                const Overrides& overrides, Checkpoint& ckpt) {
  const RunConfig requested = resolve_config(config_file, overrides);
  require_path(requested.checkpoint_path, "checkpoint");
  ckpt = load_checkpoint(requested.checkpoint_path);
  // Start from the trained configuration and re-apply what the caller set.
  RunConfig cfg = ckpt.config;
  if (config_file) apply_config_file(cfg, *config_file);
  for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
  cfg.threads = requested.threads;
  cfg.checkpoint_path = requested.checkpoint_path;
  if (!(cfg.dims == ckpt.config.dims)) {
    throw std::invalid_argument("dimensions differ from the checkpoint's architecture");
  }
  return cfg;
}

}  // namespace

int cmd_eval(const std::optional<std::string>& config_file, const Overrides& overrides,
             std::ostream& out) {
  Checkpoint ckpt;
  const RunConfig cfg = merge_with_checkpoint(config_file, overrides, ckpt);
  require_path(cfg.test_path, "test");
  const Dataset test_set = load_dataset(cfg.test_path, Split::test);
  const Dataset pool = load_pool_file(cfg);
  const EvalReport report =
      recall_at_k(test_set, pool.pool, ckpt.params, cfg.variant, cfg.eval_protocol(), cfg.threads);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  out << "metric " << to_string(cfg.variant) << "\n" << report_table(report);
  if (!cfg.report_path.empty()) {
    std::ofstream rep(cfg.report_path);
    if (!rep) throw std::runtime_error("cannot write report " + cfg.report_path);
    rep << report_records(report);
  }
  return 0;
}

int cmd_recommend(const std::optional<std::string>& config_file, const Overrides& overrides,
                  const std::string& user_file, const std::string& user_id, std::size_t top_k,
                  std::ostream& out) {
  Checkpoint ckpt;
  const RunConfig cfg = merge_with_checkpoint(config_file, overrides, ckpt);
  const Dataset users = load_dataset(user_file, Split::test);
  const UserRecord* user = &users.users.front();
  if (!user_id.empty()) {
    user = nullptr;
    for (const auto& u : users.users)
      if (u.user_id == user_id) user = &u;
    if (!user) throw std::invalid_argument("user " + user_id + " not found in " + user_file);
  }
  std::vector<EmbeddedItem> set;
  for (const auto& p : user->posts) set.push_back(embed_item(p, ckpt.params.embedding));
  const Dataset pool = load_pool_file(cfg);
  const auto pool_emb = embed_pool(pool.pool, ckpt.params);
  std::vector<std::string> warnings;
  const auto recs = recommend(PostSet(std::move(set)), pool_emb, ckpt.params.metric, cfg.variant,
                              top_k, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  out << "user " << user->user_id << " (" << user->posts.size() << " posts)\n";
  for (std::size_t r = 0; r < recs.size(); ++r) {
    out << std::setw(4) << r + 1 << "  " << recs[r].item_id << "  " << std::setprecision(6)
        << recs[r].distance << "\n";
  }
  return 0;
}

int cmd_grad_check(const GradCheckSuiteConfig& gc, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const auto cases = run_gradient_checks(gc);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  double worst = 0.0;
  for (const auto& c : cases) {
    out << std::left << std::setw(24) << c.label << " max rel err " << std::scientific
        << std::setprecision(3) << c.max_relative_error << "  (" << c.coordinates
        << " coords, worst " << c.worst_parameter << ")\n";
    worst = std::max(worst, c.max_relative_error);
  }
  out << "overall max relative error " << std::scientific << worst << " in " << std::fixed
      << std::setprecision(2) << secs << " s\n";
  return worst < 1e-4 ? 0 : 1;
}

}  // namespace i2s::cli
