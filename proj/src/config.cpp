#include "i2s/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace i2s {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_unsigned(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  }
}

std::string format_double(double d) {
  // Shortest form that round-trips.
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, ptr);
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_unsigned<std::size_t>(key, trim(item)));
  if (out.empty()) throw std::invalid_argument(key + ": empty list");
  return out;
}

std::string format_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define I2S_SIZE_FIELD(name, member)                                                       \
  Field {                                                                                  \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_unsigned<std::size_t>(name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                        \
  }
#define I2S_SEED_FIELD(name, member)                                                       \
  Field {                                                                                  \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_unsigned<std::uint64_t>(name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                        \
  }
#define I2S_DOUBLE_FIELD(name, member)                                                     \
  Field {                                                                                  \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_double(name, v); },    \
        [](const RunConfig& c) { return format_double(c.member); }                         \
  }
#define I2S_STRING_FIELD(name, member)                                                     \
  Field {                                                                                  \
    name, [](RunConfig& c, const std::string& v) { c.member = v; },                        \
        [](const RunConfig& c) { return c.member; }                                        \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      I2S_SIZE_FIELD("d_im", dims.d_im),
      I2S_SIZE_FIELD("d_w", dims.d_w),
      I2S_SIZE_FIELD("d_mod", dims.d_mod),
      I2S_SIZE_FIELD("d_emb", dims.d_emb),
      Field{"variant",
            [](RunConfig& c, const std::string& v) { c.variant = parse_metric_variant(v); },
            [](const RunConfig& c) { return to_string(c.variant); }},
      Field{"loss", [](RunConfig& c, const std::string& v) { c.loss = parse_loss_kind(v); },
            [](const RunConfig& c) { return to_string(c.loss); }},
      I2S_DOUBLE_FIELD("margin", margin),
      I2S_SIZE_FIELD("K", K),
      I2S_SIZE_FIELD("m", m),
      I2S_SIZE_FIELD("n", n),
      I2S_SIZE_FIELD("batch_size", batch_size),
      I2S_SIZE_FIELD("epochs", epochs),
      I2S_SIZE_FIELD("trials", trials),
      Field{"ks", [](RunConfig& c, const std::string& v) { c.ks = parse_list("ks", v); },
            [](const RunConfig& c) { return format_list(c.ks); }},
      I2S_DOUBLE_FIELD("lr", lr),
      I2S_DOUBLE_FIELD("momentum", momentum),
      I2S_DOUBLE_FIELD("decay_factor", decay_factor),
      I2S_SIZE_FIELD("decay_every", decay_every),
      I2S_SEED_FIELD("data_seed", data_seed),
      I2S_SEED_FIELD("train_seed", train_seed),
      I2S_SEED_FIELD("eval_seed", eval_seed),
      I2S_SIZE_FIELD("threads", threads),
      I2S_SIZE_FIELD("validate_every", validate_every),
      I2S_STRING_FIELD("train", train_path),
      I2S_STRING_FIELD("test", test_path),
      I2S_STRING_FIELD("pool", pool_path),
      I2S_STRING_FIELD("checkpoint", checkpoint_path),
      I2S_STRING_FIELD("report", report_path),
      I2S_STRING_FIELD("log", log_path),
  };
  return table;
}

#undef I2S_SIZE_FIELD
#undef I2S_SEED_FIELD
#undef I2S_DOUBLE_FIELD
#undef I2S_STRING_FIELD

}  // namespace

void RunConfig::validate() const {
  if (dims.d_im == 0 || dims.d_w == 0 || dims.d_mod == 0 || dims.d_emb == 0) {
    throw std::invalid_argument("dimensions must be positive");
  }
  train_config().validate();
  eval_protocol().validate();
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.variant = variant;
  t.loss = LossConfig{loss, m, margin};
  t.K = K;
  t.batch_size = batch_size;
  t.epochs = epochs;
  t.learning_rate = lr;
  t.momentum = momentum;
  t.decay_factor = decay_factor;
  t.decay_every = decay_every;
  t.seed = train_seed;
  t.threads = threads;
  t.validate_every = validate_every;
  return t;
}

EvalProtocol RunConfig::eval_protocol() const {
  EvalProtocol p;
  p.n = n;
  p.trials = trials;
  p.ks = ks;
  p.seed = eval_seed;
  return p;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str());
}

std::string config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& f : fields()) j[f.key] = f.get(cfg);
  return j;
}

RunConfig config_from_json(const nlohmann::ordered_json& j) {
  RunConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    apply_setting(cfg, it.key(), it.value().get<std::string>());
  }
  return cfg;
}

}  // namespace i2s
