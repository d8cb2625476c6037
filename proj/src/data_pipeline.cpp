#include "personmae/data_pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <regex>

namespace personmae {

SplitTag parse_split_tag(const std::string& text) {
  if (text == "pretrain") return SplitTag::pretrain;
  if (text == "query") return SplitTag::query;
  if (text == "gallery") return SplitTag::gallery;
  throw std::invalid_argument("unknown split tag: " + text);
}

std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::pretrain:
      return "pretrain";
    case SplitTag::query:
      return "query";
    case SplitTag::gallery:
      return "gallery";
  }
  return "?";
}

std::optional<FileLabels> parse_image_filename(const std::string& filename) {
  static const std::regex pattern(R"(^(-?[0-9]+)_c([0-9]+)_.*\.[A-Za-z0-9]+$)");
  std::smatch match;
  if (!std::regex_match(filename, match, pattern)) {
    return std::nullopt;
  }
  try {
    return FileLabels{std::stoi(match[1].str()), std::stoi(match[2].str())};
  } catch (const std::out_of_range&) {
    return std::nullopt;
  }
}

std::string format_image_filename(int identity_id, int camera_id, int index, const std::string& ext) {
  return fmt::format("{:04d}_c{}_{:03d}.{}", identity_id, camera_id, index, ext);
}

namespace {

bool has_image_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

DatasetManifest load_image_folder(const std::filesystem::path& directory, SplitTag split_tag) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory)) {
    throw std::runtime_error(fmt::format("image directory does not exist: {}", directory.string()));
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

  DatasetManifest manifest;
  manifest.split_tag = split_tag;
  for (const auto& file : files) {
    const auto labels = parse_image_filename(file.filename().string());
    if (!labels && split_tag != SplitTag::pretrain) {
      std::cerr << "warning: skipping " << file.string() << ": filename carries no identity/camera labels\n";
      continue;
    }
    ImageRecord record;
    try {
      record.pixels = read_image(file);
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << file.string() << ": " << e.what() << "\n";
      continue;
    }
    record.identity_id = labels ? labels->identity_id : -1;
    record.camera_id = labels ? labels->camera_id : -1;
    record.source_path = file.string();
    manifest.records.push_back(std::move(record));
  }
  if (manifest.records.empty()) {
    throw std::runtime_error(fmt::format("no records in {}", directory.string()));
  }
  return manifest;
}

namespace {

using Colour = std::array<double, 3>;

Colour random_colour(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

void fill_rect(Image& image, int top, int left, int height, int width, const Colour& colour) {
  const int y0 = std::max(top, 0);
  const int x0 = std::max(left, 0);
  const int y1 = std::min(top + height, image.height);
  const int x1 = std::min(left + width, image.width);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      for (int c = 0; c < 3; ++c) image.at(y, x, c) = colour[c];
    }
  }
}

void fill_ellipse(Image& image, double cy, double cx, double ry, double rx, const Colour& colour, double max_y) {
  for (int y = 0; y < image.height; ++y) {
    if (y > max_y) break;
    for (int x = 0; x < image.width; ++x) {
      const double dy = (y + 0.5 - cy) / ry;
      const double dx = (x + 0.5 - cx) / rx;
      if (dx * dx + dy * dy <= 1.0) {
        for (int c = 0; c < 3; ++c) image.at(y, x, c) = colour[c];
      }
    }
  }
}

}  // namespace

ImageRecord generate_synthetic_person(std::uint64_t seed, int identity_id) {
  // Identity signature: independent of the seed.
  Rng id_rng = make_rng(0x9e3779b97f4a7c15ULL, static_cast<std::uint64_t>(static_cast<std::int64_t>(identity_id)), 1);
  static constexpr std::array<Colour, 4> kSkin = {{{0.96, 0.80, 0.69}, {0.87, 0.67, 0.52}, {0.67, 0.48, 0.35}, {0.45, 0.31, 0.22}}};
  const Colour skin = kSkin[std::uniform_int_distribution<int>(0, 3)(id_rng)];
  const Colour hair = random_colour(id_rng, 0.0, 0.5);
  const Colour upper = random_colour(id_rng, 0.0, 1.0);
  const Colour lower = random_colour(id_rng, 0.0, 1.0);
  const Colour shoes = random_colour(id_rng, 0.0, 0.6);
  const int body_width = std::uniform_int_distribution<int>(40, 60)(id_rng);
  const int torso_length = std::uniform_int_distribution<int>(70, 100)(id_rng);
  const bool has_bag = std::bernoulli_distribution(0.5)(id_rng);
  const Colour bag = random_colour(id_rng, 0.0, 1.0);
  const bool bag_left = std::bernoulli_distribution(0.5)(id_rng);

  // Per-sample jitter.
  Rng rng = make_rng(seed, static_cast<std::uint64_t>(static_cast<std::int64_t>(identity_id)), 2);
  std::uniform_int_distribution<int> offset(-6, 6);
  std::uniform_real_distribution<double> shade(-0.05, 0.05);
  const int dx = offset(rng);
  const int dy = offset(rng);
  const Colour background = random_colour(rng, 0.55, 0.9);
  const Colour ground = random_colour(rng, 0.3, 0.6);
  const Colour tint = {shade(rng), shade(rng), shade(rng)};

  Image image(kSyntheticHeight, kSyntheticWidth, 3);
  fill_rect(image, 0, 0, kSyntheticHeight, kSyntheticWidth, background);
  fill_rect(image, 200 + dy / 2, 0, kSyntheticHeight, kSyntheticWidth, ground);

  const double cx = 64.0 + dx;
  const int head_top = 12 + dy;
  fill_ellipse(image, head_top + 18.0, cx, 18.0, 13.0, skin, kSyntheticHeight);
  fill_ellipse(image, head_top + 14.0, cx, 15.0, 14.0, hair, head_top + 10.0);

  const int torso_top = head_top + 36;
  const int left = static_cast<int>(std::lround(cx)) - body_width / 2;
  fill_rect(image, torso_top, left, torso_length, body_width, upper);
  const int legs_top = torso_top + torso_length;
  const int leg_width = body_width / 2 - 3;
  const int legs_height = 236 + dy - legs_top;
  fill_rect(image, legs_top, left, legs_height, leg_width, lower);
  fill_rect(image, legs_top, left + body_width - leg_width, legs_height, leg_width, lower);
  fill_rect(image, legs_top + legs_height, left - 2, 10, leg_width + 2, shoes);
  fill_rect(image, legs_top + legs_height, left + body_width - leg_width, 10, leg_width + 2, shoes);
  if (has_bag) {
    const int bag_left_x = bag_left ? left - 14 : left + body_width - 4;
    fill_rect(image, torso_top + torso_length / 2, bag_left_x, 36, 18, bag);
  }

  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        image.at(y, x, c) = std::clamp(image.at(y, x, c) + tint[c], 0.0, 1.0);
      }
    }
  }

  ImageRecord record;
  record.pixels = std::move(image);
  record.identity_id = identity_id;
  record.camera_id = -1;
  return record;
}

namespace {

std::pair<int, int> crop_extent(int height, int width, double scale) {
  const double side = std::sqrt(scale);
  const int h = std::clamp(static_cast<int>(std::lround(height * side)), 1, height);
  const int w = std::clamp(static_cast<int>(std::lround(width * side)), 1, width);
  return {h, w};
}

}  // namespace

GlobalAugmentParams sample_global_augment(int height, int width, Rng& rng) {
  GlobalAugmentParams params;
  params.flip = std::bernoulli_distribution(0.5)(rng);
  params.crop_scale = std::uniform_real_distribution<double>(0.8, 1.0)(rng);
  const auto [h, w] = crop_extent(height, width, params.crop_scale);
  params.crop_top = std::uniform_int_distribution<int>(0, height - h)(rng);
  params.crop_left = std::uniform_int_distribution<int>(0, width - w)(rng);
  return params;
}

Image apply_global_augment(const Image& image, const GlobalAugmentParams& params) {
  const Image source = params.flip ? flip_horizontal(image) : image;
  const auto [h, w] = crop_extent(image.height, image.width, params.crop_scale);
  return resize_bilinear(crop(source, params.crop_top, params.crop_left, h, w), image.height, image.width);
}

ImageRecord augment_global(const ImageRecord& record, Rng& rng) {
  const auto params = sample_global_augment(record.pixels.height, record.pixels.width, rng);
  ImageRecord out = record;
  out.pixels = apply_global_augment(record.pixels, params);
  return out;
}

}  // namespace personmae
