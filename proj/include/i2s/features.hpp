// On-disk item representation, feature-file I/O and a synthetic generator of
// multi-style users.
//
// Feature files are UTF-8 JSON lines. The first line is a header
//   {"format":"i2s-features","version":1,"d_im":<int>,"d_w":<int>}
// and every following line is one post
//   {"user_id":..,"item_id":..,"image":[..],"hashtag":[[..],..],"title":[[..],..]}
// Pool files use the same layout without "user_id". A pool line may carry an
// "owner" key naming the user whose held-out item it is.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "i2s/numcore.hpp"

namespace i2s {

/// Raised for malformed feature files. Carries the 1-based line number when
/// the problem is tied to a line.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t line = 0);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct FeatureDims {
  std::size_t d_im = 0;
  std::size_t d_w = 0;
  friend bool operator==(const FeatureDims&, const FeatureDims&) = default;
};

struct ItemFeatures {
  std::string item_id;
  Vec image;
  std::vector<Vec> hashtag;  // may be empty (missing modality)
  std::vector<Vec> title;    // may be empty
};

struct UserRecord {
  std::string user_id;
  std::vector<ItemFeatures> posts;  // file order, oldest first
};

struct PoolItem {
  ItemFeatures item;
  std::string owner;  // empty for items nobody held out
};

enum class Split { train, test };

struct Dataset {
  FeatureDims dims;
  Split split = Split::train;
  std::vector<UserRecord> users;
  std::vector<PoolItem> pool;
};

/// Throws ShapeError naming the item if any vector has the wrong dimension
/// or contains a non-finite value.
void validate_item(const ItemFeatures& item, const FeatureDims& dims);

/// Loads a user feature file. Errors carry line numbers; dimension problems
/// name the item.
Dataset load_dataset(const std::filesystem::path& path, Split split = Split::train);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// Loads a pool file into a Dataset with no users.
Dataset load_pool(const std::filesystem::path& path);
void save_pool(const FeatureDims& dims, const std::vector<PoolItem>& pool,
               const std::filesystem::path& path);

/// Text forms of the two file kinds; the file functions are thin wrappers.
std::string serialize_users(const Dataset& dataset);
std::string serialize_pool(const FeatureDims& dims, const std::vector<PoolItem>& pool);
Dataset parse_users(const std::string& text, Split split = Split::train);
Dataset parse_pool(const std::string& text);

/// Throws if any item_id appears in more than one of the given collections.
void check_disjoint(const Dataset& train, const Dataset& test, const std::vector<PoolItem>& pool);

struct SynthSpec {
  std::size_t num_users = 250;
  std::size_t num_test_users = 50;
  std::size_t posts_per_user = 20;
  std::size_t num_styles = 12;
  std::size_t min_styles_per_user = 2;
  std::size_t max_styles_per_user = 3;
  std::size_t d_im = 16;
  std::size_t d_w = 8;
  std::size_t words_per_style = 6;
  std::size_t max_words_per_post = 4;
  /// overall magnitude of every generated vector
  double feature_scale = 1.0;
  double noise_scale = 0.6;
  /// per-user offset shared by all of a user's image vectors (the same
  /// person, camera and taste across posts)
  double user_scale = 0.0;
  /// image dimensions each user cares about (0 = all). The user's offset
  /// lives on these dimensions and their noise is scaled by focus_noise;
  /// the remaining dimensions carry full noise and no offset.
  std::size_t focus_dims = 0;
  double focus_noise = 1.0;
  /// word-vector noise relative to noise_scale
  double hashtag_noise = 0.25;
  double title_noise = 0.5;
  double outlier_rate = 0.1;
  /// outliers are uniform in [-outlier_scale, outlier_scale] per coordinate
  double outlier_scale = 2.0;
  double missing_modality_rate = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  Dataset train;
  Dataset test;
  std::vector<PoolItem> pool;
  /// style index of every generated post, keyed like posts (user, post);
  /// outliers are recorded as -1. Kept for diagnostics.
  std::vector<std::vector<int>> post_styles;
};

SyntheticData generate_synthetic(const SynthSpec& spec);

struct StatSummary {
  std::size_t users = 0;
  std::size_t posts = 0;
  std::size_t pool = 0;
  friend bool operator==(const StatSummary&, const StatSummary&) = default;
};

StatSummary stat_summary(const Dataset& dataset);

}  // namespace i2s
