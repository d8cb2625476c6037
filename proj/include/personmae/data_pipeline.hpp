#pragma once

#include "personmae/image.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace personmae {

struct ImageRecord {
  Image pixels;
  int identity_id = -1;
  int camera_id = -1;
  std::optional<std::string> source_path;
};

enum class SplitTag { pretrain, query, gallery };

SplitTag parse_split_tag(const std::string& text);
std::string to_string(SplitTag tag);

struct DatasetManifest {
  std::vector<ImageRecord> records;
  SplitTag split_tag = SplitTag::pretrain;
};

struct FileLabels {
  int identity_id;
  int camera_id;
};

// `<identity>_c<camera>_<anything>.<ext>`, base-10 labels.
std::optional<FileLabels> parse_image_filename(const std::string& filename);
std::string format_image_filename(int identity_id, int camera_id, int index, const std::string& ext = "png");

/// Loads every decodable PNG/JPEG in `directory` in lexicographic filename order.
/// Files that fail to decode (or lack labels, for query/gallery) are skipped with a warning.
/// Throws std::runtime_error for a missing directory or when no records remain.
DatasetManifest load_image_folder(const std::filesystem::path& directory, SplitTag split_tag);

inline constexpr int kSyntheticHeight = 256;
inline constexpr int kSyntheticWidth = 128;

/// Procedural pedestrian: identity fixes the head/torso/legs/bag colours and body
/// proportions; the seed jitters the scene around them.
ImageRecord generate_synthetic_person(std::uint64_t seed, int identity_id);

struct GlobalAugmentParams {
  bool flip = false;
  double crop_scale = 1.0;  // fraction of the image area kept
  int crop_top = 0;
  int crop_left = 0;
};

GlobalAugmentParams sample_global_augment(int height, int width, Rng& rng);

/// Mirror (optional), crop at the sampled scale/position, resize back to the input size.
Image apply_global_augment(const Image& image, const GlobalAugmentParams& params);

ImageRecord augment_global(const ImageRecord& record, Rng& rng);

}  // namespace personmae
