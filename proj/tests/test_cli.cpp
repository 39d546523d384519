#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "i2s/checkpoint.hpp"

using namespace i2s;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("i2s_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RunConfig small_run(const TempDir& dir) {
  RunConfig cfg;
  cfg.dims = {4, 3, 4, 4};
  cfg.K = 4;
  cfg.m = 5;
  cfg.n = 4;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.trials = 3;
  cfg.lr = 0.01;
  cfg.train_path = dir / "train.jsonl";
  cfg.test_path = dir / "test.jsonl";
  cfg.pool_path = dir / "pool.jsonl";
  cfg.checkpoint_path = dir / "model.ckpt";
  return cfg;
}

SynthSpec small_synth() {
  SynthSpec s;
  s.num_users = 16;
  s.num_test_users = 6;
  s.posts_per_user = 8;
  return s;
}

cli::Overrides eval_overrides(const RunConfig& cfg) {
  return {{"checkpoint", cfg.checkpoint_path},
          {"test", cfg.test_path},
          {"pool", cfg.pool_path}};
}

}  // namespace

TEST(Config, DefaultsMatchTrainingProtocol) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.lr, 0.001);
  EXPECT_EQ(cfg.momentum, 0.95);
  EXPECT_EQ(cfg.batch_size, 32u);
  EXPECT_EQ(cfg.m, 50u);
  EXPECT_EQ(cfg.n, 10u);
  EXPECT_EQ(cfg.trials, 50u);
  EXPECT_EQ(cfg.decay_factor, 0.2);
  EXPECT_EQ(cfg.decay_every, 300u);
  EXPECT_EQ(cfg.ks, (std::vector<std::size_t>{1, 10, 25}));
}

TEST(Config, TextParsingAndRoundTrip) {
  RunConfig cfg;
  apply_config_text(cfg, "# comment\nlr = 0.05  # trailing\nvariant = nn\nks = 1,5\n\nK=7\n");
  EXPECT_EQ(cfg.lr, 0.05);
  EXPECT_EQ(cfg.variant, MetricVariant::nn);
  EXPECT_EQ(cfg.ks, (std::vector<std::size_t>{1, 5}));
  EXPECT_EQ(cfg.K, 7u);
  RunConfig back;
  apply_config_text(back, config_text(cfg));
  EXPECT_EQ(back, cfg);
  EXPECT_EQ(config_from_json(config_to_json(cfg)), cfg);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  RunConfig cfg;
  EXPECT_THROW(apply_setting(cfg, "learning_rate", "0.1"), std::invalid_argument);
  EXPECT_THROW(apply_setting(cfg, "lr", "fast"), std::invalid_argument);
  EXPECT_THROW(apply_setting(cfg, "variant", "median"), std::invalid_argument);
  EXPECT_THROW(apply_config_text(cfg, "lr 0.1\n"), std::invalid_argument);
  cfg.n = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Config, FlagsOverrideFileAndEnvironmentFillsThreads) {
  TempDir dir("override");
  std::ofstream(dir / "run.cfg") << "lr = 0.05\nepochs = 7\n";
  const RunConfig cfg = cli::resolve_config(dir / "run.cfg", {{"lr", "0.2"}});
  EXPECT_EQ(cfg.lr, 0.2);
  EXPECT_EQ(cfg.epochs, 7u);
  setenv("I2S_THREADS", "3", 1);
  EXPECT_EQ(cli::resolve_config(std::nullopt, {}).threads, 3u);
  EXPECT_EQ(cli::resolve_config(std::nullopt, {{"threads", "2"}}).threads, 2u);
  unsetenv("I2S_THREADS");
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  TempDir dir("ckpt");
  RunConfig cfg;
  cfg.dims = {5, 3, 4, 6};
  cfg.variant = MetricVariant::weighted_uv;
  const Checkpoint ck{cfg, initial_params(cfg.dims, 11)};
  const std::string bytes = serialize_checkpoint(ck);
  EXPECT_EQ(bytes.substr(0, 8), "I2SML001");
  save_checkpoint(ck, dir / "a.ckpt");
  const Checkpoint loaded = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(loaded.params, ck.params);
  EXPECT_EQ(loaded.config, ck.config);
  save_checkpoint(loaded, dir / "b.ckpt");
  EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
}

TEST(Checkpoint, RejectsCorruptInput) {
  RunConfig cfg;
  cfg.dims = {2, 2, 2, 2};
  const std::string bytes = serialize_checkpoint({cfg, initial_params(cfg.dims, 1)});
  EXPECT_THROW(parse_checkpoint("NOTMAGIC" + bytes.substr(8)), std::runtime_error);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), std::runtime_error);
  EXPECT_THROW(parse_checkpoint(bytes + "x"), std::runtime_error);
  RunConfig other = cfg;
  other.dims.d_emb = 3;
  const std::string wrong = serialize_checkpoint({other, initial_params(cfg.dims, 1)});
  EXPECT_THROW(parse_checkpoint(wrong), std::runtime_error);
}

TEST(Commands, GenTrainEvalIsDeterministic) {
  TempDir dir("pipeline");
  const RunConfig cfg = small_run(dir);
  std::ostringstream sink;
  ASSERT_EQ(cli::cmd_gen_data(cfg, small_synth(), sink), 0);
  const std::string train_bytes = slurp(cfg.train_path);
  ASSERT_EQ(cli::cmd_gen_data(cfg, small_synth(), sink), 0);
  EXPECT_EQ(slurp(cfg.train_path), train_bytes);

  std::string reports[2];
  std::string checkpoints[2];
  for (int run = 0; run < 2; ++run) {
    ASSERT_EQ(cli::cmd_train(cfg, sink), 0);
    checkpoints[run] = slurp(cfg.checkpoint_path);
    std::ostringstream out;
    ASSERT_EQ(cli::cmd_eval(std::nullopt, eval_overrides(cfg), out), 0);
    reports[run] = out.str();
  }
  EXPECT_EQ(checkpoints[0], checkpoints[1]);
  EXPECT_EQ(reports[0], reports[1]);
  EXPECT_NE(reports[0].find("Recall@25"), std::string::npos);
  EXPECT_FALSE(slurp(cfg.checkpoint_path + ".log.jsonl").empty());
}

TEST(Commands, RecommendPrintsTopK) {
  TempDir dir("recommend");
  const RunConfig cfg = small_run(dir);
  std::ostringstream sink;
  ASSERT_EQ(cli::cmd_gen_data(cfg, small_synth(), sink), 0);
  ASSERT_EQ(cli::cmd_train(cfg, sink), 0);
  std::ostringstream out;
  ASSERT_EQ(cli::cmd_recommend(std::nullopt, eval_overrides(cfg), cfg.test_path, "", 3, out), 0);
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  EXPECT_THROW(cli::cmd_recommend(std::nullopt, eval_overrides(cfg), cfg.test_path, "nobody", 3, out),
               std::invalid_argument);
}

TEST(Commands, EvalRejectsMismatchedDimensions) {
  TempDir dir("dims");
  const RunConfig cfg = small_run(dir);
  std::ostringstream sink;
  ASSERT_EQ(cli::cmd_gen_data(cfg, small_synth(), sink), 0);
  ASSERT_EQ(cli::cmd_train(cfg, sink), 0);
  auto ov = eval_overrides(cfg);
  ov["d_emb"] = "8";
  EXPECT_THROW(cli::cmd_eval(std::nullopt, ov, sink), std::invalid_argument);
}

TEST(Commands, RandomModelIsAtChanceWhenFeaturesCarryNoUserSignal) {
  TempDir dir("chance");
  RunConfig cfg = small_run(dir);
  cfg.trials = 50;
  cfg.ks = {10};
  cfg.n = 10;
  cfg.epochs = 0;
  SynthSpec s = small_synth();
  s.num_users = 100;
  s.num_test_users = 100 - 1;
  s.posts_per_user = 12;
  s.num_styles = 1;
  s.min_styles_per_user = s.max_styles_per_user = 1;
  std::ostringstream sink;
  ASSERT_EQ(cli::cmd_gen_data(cfg, s, sink), 0);
  ASSERT_EQ(cli::cmd_train(cfg, sink), 0);
  auto ov = eval_overrides(cfg);
  ov["report"] = dir / "report.jsonl";
  ASSERT_EQ(cli::cmd_eval(std::nullopt, ov, sink), 0);
  const std::string rec = slurp(dir / "report.jsonl");
  const auto pos = rec.find("\"recall\":") + 9;
  const double recall = std::stod(rec.substr(pos));
  EXPECT_NEAR(recall, 0.10, 0.03);
}

TEST(Commands, GradCheckPasses) {
  std::ostringstream out;
  EXPECT_EQ(cli::cmd_grad_check(GradCheckSuiteConfig{}, out), 0);
  EXPECT_NE(out.str().find("full/triplet"), std::string::npos);
}
