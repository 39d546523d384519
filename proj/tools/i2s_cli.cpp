// i2s: item-to-set metric learning from the command line.
//
//   i2s gen-data   --train tr.jsonl --test te.jsonl --pool pool.jsonl
//   i2s train      --train tr.jsonl --checkpoint model.ckpt
//   i2s eval       --checkpoint model.ckpt --test te.jsonl --pool pool.jsonl
//   i2s recommend  --checkpoint model.ckpt --pool pool.jsonl --user-file u.jsonl --top-k 3
//   i2s grad-check
//
// Every configuration key is also a flag (--lr, --momentum, --variant, ...);
// --config reads a key = value file which flags then override.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using i2s::cli::Overrides;

void add_config_flags(CLI::App* app, Overrides& overrides, std::optional<std::string>& config) {
  app->add_option_function<std::string>(
      "--config", [&config](const std::string& v) { config = v; }, "key = value config file");
  for (const auto& key : i2s::config_keys()) {
    app->add_option_function<std::string>(
        "--" + key, [&overrides, key](const std::string& v) { overrides[key] = v; });
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"item-to-set metric learning for set-conditioned recommendation"};
  app.require_subcommand(1);

  Overrides overrides;
  std::optional<std::string> config_file;

  auto* gen = app.add_subcommand("gen-data", "write synthetic train/test/pool feature files");
  add_config_flags(gen, overrides, config_file);
  i2s::SynthSpec synth;
  gen->add_option("--users", synth.num_users, "total users")->capture_default_str();
  gen->add_option("--test-users", synth.num_test_users)->capture_default_str();
  gen->add_option("--posts", synth.posts_per_user, "posts per user")->capture_default_str();
  gen->add_option("--styles", synth.num_styles)->capture_default_str();
  gen->add_option("--min-styles", synth.min_styles_per_user)->capture_default_str();
  gen->add_option("--max-styles", synth.max_styles_per_user)->capture_default_str();
  gen->add_option("--words-per-style", synth.words_per_style)->capture_default_str();
  gen->add_option("--noise", synth.noise_scale)->capture_default_str();
  gen->add_option("--outliers", synth.outlier_rate)->capture_default_str();
  gen->add_option("--missing", synth.missing_modality_rate)->capture_default_str();
  gen->add_option("--max-words", synth.max_words_per_post)->capture_default_str();
  gen->add_option("--feature-scale", synth.feature_scale)->capture_default_str();
  gen->add_option("--user-scale", synth.user_scale, "per-user image offset")->capture_default_str();
  gen->add_option("--focus-dims", synth.focus_dims)->capture_default_str();
  gen->add_option("--focus-noise", synth.focus_noise)->capture_default_str();
  gen->add_option("--hashtag-noise", synth.hashtag_noise)->capture_default_str();
  gen->add_option("--title-noise", synth.title_noise)->capture_default_str();
  gen->add_option("--outlier-scale", synth.outlier_scale)->capture_default_str();

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_config_flags(train, overrides, config_file);

  auto* eval = app.add_subcommand("eval", "recall@k of a checkpoint on the test users");
  add_config_flags(eval, overrides, config_file);

  auto* rec = app.add_subcommand("recommend", "top-k pool items for one user");
  add_config_flags(rec, overrides, config_file);
  std::string user_file;
  std::string user_id;
  std::size_t top_k = 3;
  rec->add_option("--user-file", user_file, "feature file holding the user's posts")->required();
  rec->add_option("--user", user_id, "user id (default: first user in the file)");
  rec->add_option("--top-k", top_k)->capture_default_str();

  auto* gc = app.add_subcommand("grad-check", "finite-difference check of all gradients");
  i2s::GradCheckSuiteConfig gc_cfg;
  std::size_t gc_dim = 4;
  gc->add_option("--dim", gc_dim, "d_im = d_w = d_mod = d_emb")->capture_default_str();
  gc->add_option("--set-size", gc_cfg.K)->capture_default_str();
  gc->add_option("--negatives", gc_cfg.m)->capture_default_str();
  gc->add_option("--epsilon", gc_cfg.epsilon)->capture_default_str();
  gc->add_option("--seed", gc_cfg.seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return i2s::cli::cmd_gen_data(i2s::cli::resolve_config(config_file, overrides), synth,
                                    std::cout);
    }
    if (train->parsed()) {
      return i2s::cli::cmd_train(i2s::cli::resolve_config(config_file, overrides), std::cout);
    }
    if (eval->parsed()) return i2s::cli::cmd_eval(config_file, overrides, std::cout);
    if (rec->parsed()) {
      return i2s::cli::cmd_recommend(config_file, overrides, user_file, user_id, top_k, std::cout);
    }
    if (gc->parsed()) {
      gc_cfg.dims = i2s::ModelDims{gc_dim, gc_dim, gc_dim, gc_dim};
      return i2s::cli::cmd_grad_check(gc_cfg, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
