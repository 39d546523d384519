#include "i2s/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace i2s {

namespace {

using ojson = nlohmann::ordered_json;

constexpr const char* kFormat = "i2s-features";
constexpr int kVersion = 1;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

ojson header_json(const FeatureDims& dims) {
  ojson h;
  h["format"] = kFormat;
  h["version"] = kVersion;
  h["d_im"] = dims.d_im;
  h["d_w"] = dims.d_w;
  return h;
}

FeatureDims parse_header(const std::string& line) {
  ojson h;
  try {
    h = ojson::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid header: ") + e.what(), 1);
  }
  if (!h.is_object() || h.value("format", "") != kFormat) {
    throw FormatError("missing i2s-features header", 1);
  }
  if (!h.contains("version") || h["version"] != kVersion) {
    throw FormatError("unsupported format version", 1);
  }
  FeatureDims dims;
  try {
    dims.d_im = h.at("d_im").get<std::size_t>();
    dims.d_w = h.at("d_w").get<std::size_t>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError("header needs integer d_im and d_w", 1);
  }
  if (dims.d_im == 0 || dims.d_w == 0) throw FormatError("header dimensions must be positive", 1);
  return dims;
}

ojson vec_json(const Vec& v) { return ojson(v); }

ojson words_json(const std::vector<Vec>& words) {
  ojson arr = ojson::array();
  for (const auto& w : words) arr.push_back(vec_json(w));
  return arr;
}

ojson item_json(const ItemFeatures& item, const std::string* user_id, const std::string* owner) {
  ojson j;
  if (user_id) j["user_id"] = *user_id;
  j["item_id"] = item.item_id;
  j["image"] = vec_json(item.image);
  j["hashtag"] = words_json(item.hashtag);
  j["title"] = words_json(item.title);
  if (owner && !owner->empty()) j["owner"] = *owner;
  return j;
}

std::vector<Vec> parse_words(const ojson& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw FormatError(std::string("missing array \"") + key + "\"", line);
  }
  std::vector<Vec> words;
  for (const auto& w : j[key]) words.push_back(w.get<Vec>());
  return words;
}

ItemFeatures parse_item(const ojson& j, std::size_t line) {
  ItemFeatures item;
  try {
    item.item_id = j.at("item_id").get<std::string>();
    item.image = j.at("image").get<Vec>();
    item.hashtag = parse_words(j, "hashtag", line);
    item.title = parse_words(j, "title", line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed record: ") + e.what(), line);
  }
  return item;
}

ojson parse_line(const std::string& text, std::size_t line) {
  try {
    ojson j = ojson::parse(text);
    if (!j.is_object()) throw FormatError("record is not a JSON object", line);
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed record: ") + e.what(), line);
  }
}

}  // namespace

FormatError::FormatError(const std::string& what, std::size_t line)
    : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
      line_(line) {}

void validate_item(const ItemFeatures& item, const FeatureDims& dims) {
  auto finite = [](const Vec& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (item.image.size() != dims.d_im) {
    throw ShapeError("item " + item.item_id + ": image has dimension " +
                     std::to_string(item.image.size()) + ", expected " +
                     std::to_string(dims.d_im));
  }
  if (!finite(item.image)) throw ShapeError("item " + item.item_id + ": non-finite image value");
  for (const auto* words : {&item.hashtag, &item.title}) {
    const char* name = words == &item.hashtag ? "hashtag" : "title";
    for (const auto& w : *words) {
      if (w.size() != dims.d_w) {
        throw ShapeError("item " + item.item_id + ": " + name + " vector has dimension " +
                         std::to_string(w.size()) + ", expected " + std::to_string(dims.d_w));
      }
      if (!finite(w)) throw ShapeError("item " + item.item_id + ": non-finite " + name + " value");
    }
  }
}

std::string serialize_users(const Dataset& dataset) {
  std::string out = header_json(dataset.dims).dump() + "\n";
  for (const auto& user : dataset.users) {
    for (const auto& post : user.posts) {
      out += item_json(post, &user.user_id, nullptr).dump();
      out += '\n';
    }
  }
  return out;
}

std::string serialize_pool(const FeatureDims& dims, const std::vector<PoolItem>& pool) {
  std::string out = header_json(dims).dump() + "\n";
  for (const auto& p : pool) {
    out += item_json(p.item, nullptr, &p.owner).dump();
    out += '\n';
  }
  return out;
}

Dataset parse_users(const std::string& text, Split split) {
  const auto lines = split_lines(text);
  if (lines.empty() || blank(lines.front())) throw FormatError("missing header", 1);
  Dataset ds;
  ds.split = split;
  ds.dims = parse_header(lines.front());
  std::unordered_map<std::string, std::size_t> user_index;
  std::unordered_set<std::string> seen_items;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    const std::size_t line = i + 1;
    const ojson j = parse_line(lines[i], line);
    std::string user_id;
    try {
      user_id = j.at("user_id").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw FormatError("record has no string user_id", line);
    }
    ItemFeatures item = parse_item(j, line);
    validate_item(item, ds.dims);
    auto [it, inserted] = user_index.emplace(user_id, ds.users.size());
    if (inserted) ds.users.push_back(UserRecord{user_id, {}});
    if (!seen_items.insert(user_id + '\n' + item.item_id).second) {
      throw FormatError("duplicate item_id " + item.item_id + " for user " + user_id, line);
    }
    ds.users[it->second].posts.push_back(std::move(item));
  }
  if (ds.users.empty()) throw FormatError("no users");
  return ds;
}

Dataset parse_pool(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty() || blank(lines.front())) throw FormatError("missing header", 1);
  Dataset ds;
  ds.split = Split::test;
  ds.dims = parse_header(lines.front());
  std::unordered_set<std::string> ids;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    const std::size_t line = i + 1;
    const ojson j = parse_line(lines[i], line);
    if (j.contains("user_id")) throw FormatError("pool records must not carry user_id", line);
    PoolItem p;
    p.item = parse_item(j, line);
    validate_item(p.item, ds.dims);
    if (j.contains("owner")) {
      if (!j["owner"].is_string()) throw FormatError("owner must be a string", line);
      p.owner = j["owner"].get<std::string>();
    }
    if (!ids.insert(p.item.item_id).second) {
      throw FormatError("duplicate pool item_id " + p.item.item_id, line);
    }
    ds.pool.push_back(std::move(p));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, Split split) {
  return parse_users(read_file(path), split);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file(path, serialize_users(dataset));
}

Dataset load_pool(const std::filesystem::path& path) { return parse_pool(read_file(path)); }

void save_pool(const FeatureDims& dims, const std::vector<PoolItem>& pool,
               const std::filesystem::path& path) {
  write_file(path, serialize_pool(dims, pool));
}

void check_disjoint(const Dataset& train, const Dataset& test, const std::vector<PoolItem>& pool) {
  std::unordered_map<std::string, std::string> where;
  auto claim = [&](const std::string& id, const std::string& origin) {
    auto [it, inserted] = where.emplace(id, origin);
    if (!inserted && it->second != origin) {
      throw std::invalid_argument("item " + id + " appears in both " + it->second + " and " +
                                  origin);
    }
  };
  for (const auto& u : train.users)
    for (const auto& p : u.posts) claim(p.item_id, "train");
  for (const auto& u : test.users)
    for (const auto& p : u.posts) claim(p.item_id, "test");
  for (const auto& p : pool) claim(p.item.item_id, "pool");
}

void SynthSpec::validate() const {
  if (num_users == 0) throw std::invalid_argument("synthetic spec: zero users");
  if (num_test_users >= num_users) {
    throw std::invalid_argument("synthetic spec: need at least one training user");
  }
  if (posts_per_user == 0) throw std::invalid_argument("synthetic spec: zero posts per user");
  if (num_styles == 0) throw std::invalid_argument("synthetic spec: zero styles");
  if (min_styles_per_user < 1 || min_styles_per_user > max_styles_per_user ||
      max_styles_per_user > num_styles) {
    throw std::invalid_argument("synthetic spec: styles per user outside [1, num_styles]");
  }
  if (d_im == 0 || d_w == 0) throw std::invalid_argument("synthetic spec: zero dimension");
  if (words_per_style == 0 || max_words_per_post == 0) {
    throw std::invalid_argument("synthetic spec: empty word banks");
  }
  if (!(noise_scale >= 0.0)) throw std::invalid_argument("synthetic spec: negative noise");
  if (!(hashtag_noise >= 0.0 && title_noise >= 0.0)) {
    throw std::invalid_argument("synthetic spec: negative word noise");
  }
  if (!(user_scale >= 0.0)) throw std::invalid_argument("synthetic spec: negative user scale");
  if (focus_dims > d_im || !(focus_noise >= 0.0)) {
    throw std::invalid_argument("synthetic spec: bad focus dimensions");
  }
  if (!(outlier_scale >= 0.0)) throw std::invalid_argument("synthetic spec: negative outlier scale");
  if (!(outlier_rate >= 0.0 && outlier_rate < 1.0) ||
      !(missing_modality_rate >= 0.0 && missing_modality_rate < 1.0)) {
    throw std::invalid_argument("synthetic spec: rates must lie in [0, 1)");
  }
}

namespace {

struct StyleBank {
  Vec image_prototype;
  std::vector<Vec> hashtag_words;
  std::vector<Vec> title_words;
};

Vec gaussian_vec(std::size_t n, double scale, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vec v(n);
  for (auto& x : v) x = scale * dist(rng);
  return v;
}

struct UserProfile {
  Vec offset;
  Vec noise;
};

Vec uniform_vec(std::size_t n, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Vec v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

std::size_t uniform_index(std::size_t n, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::string pad(std::size_t v, int width) {
  std::ostringstream os;
  os << std::setw(width) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

SyntheticData generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  // Hashtags carry less noise than image features; titles mix style words
  // with a bank of generic words shared across styles.
  const double hashtag_noise = spec.hashtag_noise * spec.noise_scale;
  const double title_noise = spec.title_noise * spec.noise_scale;

  std::vector<StyleBank> styles(spec.num_styles);
  for (auto& s : styles) {
    s.image_prototype = gaussian_vec(spec.d_im, 1.0, rng);
    for (std::size_t w = 0; w < spec.words_per_style; ++w) {
      s.hashtag_words.push_back(gaussian_vec(spec.d_w, 1.0, rng));
      s.title_words.push_back(gaussian_vec(spec.d_w, 1.0, rng));
    }
  }
  std::vector<Vec> generic_words;
  for (std::size_t w = 0; w < spec.words_per_style; ++w) {
    generic_words.push_back(gaussian_vec(spec.d_w, 1.0, rng));
  }

  std::bernoulli_distribution outlier(spec.outlier_rate);
  std::bernoulli_distribution missing(spec.missing_modality_rate);
  std::bernoulli_distribution generic_title(0.5);
  std::uniform_int_distribution<std::size_t> word_count(1, spec.max_words_per_post);

  auto draw_words = [&](const std::vector<Vec>& bank, const std::vector<Vec>* mix, double noise) {
    std::vector<Vec> words;
    const std::size_t count = word_count(rng);
    for (std::size_t k = 0; k < count; ++k) {
      const auto& src = (mix && generic_title(rng)) ? *mix : bank;
      Vec w = src[uniform_index(src.size(), rng)];
      const Vec eps = gaussian_vec(spec.d_w, noise, rng);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += eps[i];
      words.push_back(std::move(w));
    }
    return words;
  };

  auto make_post = [&](std::size_t style, const UserProfile& profile, bool allow_outlier,
                       int& style_tag) {
    ItemFeatures item;
    if (allow_outlier && outlier(rng)) {
      style_tag = -1;
      item.image = uniform_vec(spec.d_im, spec.outlier_scale, rng);
      const std::size_t nh = word_count(rng);
      const std::size_t nt = word_count(rng);
      for (std::size_t k = 0; k < nh; ++k) item.hashtag.push_back(uniform_vec(spec.d_w, spec.outlier_scale, rng));
      for (std::size_t k = 0; k < nt; ++k) item.title.push_back(uniform_vec(spec.d_w, spec.outlier_scale, rng));
    } else {
      style_tag = static_cast<int>(style);
      const StyleBank& s = styles[style];
      item.image = s.image_prototype;
      const Vec eps = gaussian_vec(spec.d_im, spec.noise_scale, rng);
      for (std::size_t i = 0; i < item.image.size(); ++i) {
        item.image[i] += profile.noise[i] * eps[i] + profile.offset[i];
      }
      item.hashtag = draw_words(s.hashtag_words, nullptr, hashtag_noise);
      item.title = draw_words(s.title_words, &generic_words, title_noise);
    }
    if (missing(rng)) item.hashtag.clear();
    if (missing(rng)) item.title.clear();
    for (auto& x : item.image) x *= spec.feature_scale;
    for (auto* words : {&item.hashtag, &item.title}) {
      for (auto& w : *words) {
        for (auto& x : w) x *= spec.feature_scale;
      }
    }
    return item;
  };

  SyntheticData out;
  const FeatureDims dims{spec.d_im, spec.d_w};
  out.train.dims = out.test.dims = dims;
  out.train.split = Split::train;
  out.test.split = Split::test;
  const std::size_t num_train = spec.num_users - spec.num_test_users;
  std::uniform_int_distribution<std::size_t> style_count(spec.min_styles_per_user,
                                                         spec.max_styles_per_user);
  std::vector<std::size_t> all_styles(spec.num_styles);
  for (std::size_t s = 0; s < spec.num_styles; ++s) all_styles[s] = s;

  for (std::size_t u = 0; u < spec.num_users; ++u) {
    UserRecord user;
    user.user_id = "u" + pad(u, 5);
    const std::size_t k = style_count(rng);
    std::vector<std::size_t> mine = all_styles;
    std::shuffle(mine.begin(), mine.end(), rng);
    mine.resize(k);
    UserProfile profile;
    profile.offset = gaussian_vec(spec.d_im, spec.user_scale, rng);
    profile.noise.assign(spec.d_im, 1.0);
    if (spec.focus_dims > 0) {
      std::vector<std::size_t> dims_order(spec.d_im);
      for (std::size_t i = 0; i < spec.d_im; ++i) dims_order[i] = i;
      std::shuffle(dims_order.begin(), dims_order.end(), rng);
      for (std::size_t r = 0; r < spec.d_im; ++r) {
        if (r < spec.focus_dims) {
          profile.noise[dims_order[r]] = spec.focus_noise;
        } else {
          profile.offset[dims_order[r]] = 0.0;
        }
      }
    }

    std::vector<int> tags;
    for (std::size_t p = 0; p < spec.posts_per_user; ++p) {
      int tag = 0;
      ItemFeatures item = make_post(mine[uniform_index(k, rng)], profile, true, tag);
      item.item_id = user.user_id + "_p" + pad(p, 4);
      user.posts.push_back(std::move(item));
      tags.push_back(tag);
    }
    int tag = 0;
    PoolItem held_out{make_post(mine[uniform_index(k, rng)], profile, false, tag), user.user_id};
    held_out.item.item_id = user.user_id + "_latest";
    out.pool.push_back(std::move(held_out));
    out.post_styles.push_back(std::move(tags));

    (u < num_train ? out.train : out.test).users.push_back(std::move(user));
  }
  return out;
}

StatSummary stat_summary(const Dataset& dataset) {
  StatSummary s;
  s.users = dataset.users.size();
  for (const auto& u : dataset.users) s.posts += u.posts.size();
  s.pool = dataset.pool.size();
  return s;
}

}  // namespace i2s
