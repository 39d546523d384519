#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "i2s/features.hpp"

using namespace i2s;

namespace {

std::string header(int d_im, int d_w) {
  return "{\"format\":\"i2s-features\",\"version\":1,\"d_im\":" + std::to_string(d_im) +
         ",\"d_w\":" + std::to_string(d_w) + "}\n";
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("i2s_test_" + name);
}

SynthSpec small_spec() {
  SynthSpec s;
  s.num_users = 12;
  s.num_test_users = 4;
  s.posts_per_user = 6;
  s.d_im = 5;
  s.d_w = 3;
  s.seed = 42;
  return s;
}

}  // namespace

TEST(FeatureFile, EmptyFileReportsNoUsers) {
  try {
    parse_users(header(4, 2));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("no users"), std::string::npos);
  }
}

TEST(FeatureFile, SinglePostRoundTripsByteIdentical) {
  Dataset d;
  d.dims = {4, 2};
  d.users.push_back({"alice", {{"alice_p0", {0.1, -2.5, 3.0, 1e-300}, {{1.0, 2.0}}, {}}}});
  const auto path = temp_path("single.jsonl");
  save_dataset(d, path);
  const std::string first = read_file(path);
  save_dataset(load_dataset(path), path);
  EXPECT_EQ(read_file(path), first);
  std::filesystem::remove(path);
}

TEST(FeatureFile, WrongWordDimensionNamesItem) {
  const std::string text =
      header(2, 3) +
      "{\"user_id\":\"u\",\"item_id\":\"post-17\",\"image\":[1,2],\"hashtag\":[[1,2]],\"title\":[]}\n";
  try {
    parse_users(text);
    FAIL() << "expected an error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("post-17"), std::string::npos) << e.what();
  }
}

TEST(FeatureFile, ErrorsCarryLineNumbers) {
  const std::string text = header(2, 1) +
                           "{\"user_id\":\"u\",\"item_id\":\"a\",\"image\":[1,2],\"hashtag\":[],"
                           "\"title\":[]}\n"
                           "not json\n";
  try {
    parse_users(text);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(FeatureFile, RejectsDuplicateItems) {
  const std::string line =
      "{\"user_id\":\"u\",\"item_id\":\"a\",\"image\":[1],\"hashtag\":[],\"title\":[]}\n";
  EXPECT_THROW(parse_users(header(1, 1) + line + line), FormatError);
}

TEST(FeatureFile, RejectsBadHeader) {
  EXPECT_THROW(parse_users("{\"format\":\"other\"}\n"), FormatError);
  EXPECT_THROW(parse_users(""), FormatError);
}

TEST(FeatureFile, PoolRoundTrip) {
  const SyntheticData data = generate_synthetic(small_spec());
  const std::string text = serialize_pool(data.train.dims, data.pool);
  const Dataset back = parse_pool(text);
  EXPECT_EQ(serialize_pool(back.dims, back.pool), text);
  ASSERT_EQ(back.pool.size(), data.pool.size());
  EXPECT_EQ(back.pool.front().owner, data.pool.front().owner);
}

TEST(FeatureFile, SyntheticDatasetRoundTrip) {
  const SyntheticData data = generate_synthetic(small_spec());
  const std::string text = serialize_users(data.train);
  EXPECT_EQ(serialize_users(parse_users(text)), text);
}

TEST(Synthetic, SameSeedSameBytes) {
  const SyntheticData a = generate_synthetic(small_spec());
  const SyntheticData b = generate_synthetic(small_spec());
  EXPECT_EQ(serialize_users(a.train), serialize_users(b.train));
  EXPECT_EQ(serialize_users(a.test), serialize_users(b.test));
  EXPECT_EQ(serialize_pool(a.train.dims, a.pool), serialize_pool(b.train.dims, b.pool));
  SynthSpec other = small_spec();
  other.seed = 43;
  EXPECT_NE(serialize_users(generate_synthetic(other).train), serialize_users(a.train));
}

TEST(Synthetic, ZeroNoiseReproducesPrototype) {
  SynthSpec s = small_spec();
  s.noise_scale = 0.0;
  s.outlier_rate = 0.0;
  s.missing_modality_rate = 0.0;
  s.min_styles_per_user = s.max_styles_per_user = 1;
  const SyntheticData data = generate_synthetic(s);
  for (const auto& u : data.train.users) {
    for (const auto& p : u.posts) EXPECT_EQ(p.image, u.posts.front().image);
  }
}

TEST(Synthetic, InterUserDistanceExceedsIntraUser) {
  SynthSpec s = small_spec();
  s.num_users = 20;
  s.num_test_users = 1;
  s.posts_per_user = 10;
  s.min_styles_per_user = s.max_styles_per_user = 1;
  s.noise_scale = 0.1;
  s.outlier_rate = 0.0;
  const SyntheticData data = generate_synthetic(s);
  // Pick two training users whose single styles differ.
  std::size_t a = 0, b = 1;
  while (data.post_styles[b][0] == data.post_styles[a][0]) ++b;
  auto mean_dist = [](const UserRecord& x, const UserRecord& y, bool same) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < x.posts.size(); ++i) {
      for (std::size_t j = same ? i + 1 : 0; j < y.posts.size(); ++j) {
        double d = 0.0;
        for (std::size_t k = 0; k < x.posts[i].image.size(); ++k) {
          const double diff = x.posts[i].image[k] - y.posts[j].image[k];
          d += diff * diff;
        }
        sum += d;
        ++n;
      }
    }
    return sum / static_cast<double>(n);
  };
  const auto& users = data.train.users;
  const double intra = 0.5 * (mean_dist(users[a], users[a], true) + mean_dist(users[b], users[b], true));
  EXPECT_GT(mean_dist(users[a], users[b], false), intra);
}

TEST(Synthetic, SplitsAreDisjointAndHeldOutItemsHaveOwners) {
  const SyntheticData data = generate_synthetic(small_spec());
  EXPECT_NO_THROW(check_disjoint(data.train, data.test, data.pool));
  EXPECT_EQ(data.train.users.size(), 8u);
  EXPECT_EQ(data.test.users.size(), 4u);
  EXPECT_EQ(data.pool.size(), 12u);
  for (const auto& u : data.test.users) {
    const auto it = std::find_if(data.pool.begin(), data.pool.end(),
                                 [&](const PoolItem& p) { return p.owner == u.user_id; });
    EXPECT_NE(it, data.pool.end());
  }
}

TEST(Synthetic, ImpossibleSpecThrows) {
  SynthSpec s = small_spec();
  s.num_users = 0;
  EXPECT_THROW(generate_synthetic(s), std::invalid_argument);
  s = small_spec();
  s.max_styles_per_user = s.num_styles + 1;
  EXPECT_THROW(generate_synthetic(s), std::invalid_argument);
}

TEST(Synthetic, CheckDisjointCatchesOverlap) {
  const SyntheticData data = generate_synthetic(small_spec());
  Dataset test = data.test;
  test.users.front().posts.front().item_id = data.train.users.front().posts.front().item_id;
  EXPECT_THROW(check_disjoint(data.train, test, data.pool), std::exception);
}

TEST(StatSummary, Counts) {
  EXPECT_EQ(stat_summary(Dataset{}).pool, 0u);
  SynthSpec s = small_spec();
  s.num_users = 10;
  s.num_test_users = 1;
  s.posts_per_user = 5;
  const SyntheticData data = generate_synthetic(s);
  Dataset all = data.train;
  for (const auto& u : data.test.users) all.users.push_back(u);
  EXPECT_EQ(stat_summary(all).posts, 50u);
}

TEST(StatSummary, MatchesLineCountOracle) {
  const SyntheticData data = generate_synthetic(small_spec());
  const auto path = temp_path("count.jsonl");
  save_dataset(data.train, path);
  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0;
  std::vector<std::string> users;
  while (std::getline(in, line)) {
    if (lines++ == 0) continue;
    const auto start = line.find("\"user_id\":\"") + 11;
    const std::string uid = line.substr(start, line.find('"', start) - start);
    if (std::find(users.begin(), users.end(), uid) == users.end()) users.push_back(uid);
  }
  const StatSummary s = stat_summary(load_dataset(path));
  EXPECT_EQ(s.posts, lines - 1);
  EXPECT_EQ(s.users, users.size());
  std::filesystem::remove(path);
}
