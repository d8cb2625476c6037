#include "personmae/region_sampler.hpp"

#include <fmt/format.h>

namespace personmae {

RegionPair make_region_pair(const Image& image, int height, int width, int pad, int shift_h, int shift_w) {
  if (pad < 0 || shift_h < 0 || shift_h > pad || shift_w < 0 || shift_w > pad / 2) {
    throw std::invalid_argument(fmt::format("invalid region geometry p={} shift=({}, {})", pad, shift_h, shift_w));
  }
  const Image canvas = resize_bilinear(image, height + pad, width + pad / 2);
  RegionPair pair;
  pair.region_a = crop(canvas, 0, 0, height, width);
  pair.region_b = crop(canvas, shift_h, shift_w, height, width);
  pair.pad = pad;
  pair.shift_h = shift_h;
  pair.shift_w = shift_w;
  pair.height = height;
  pair.width = width;
  return pair;
}

RegionPair sample_cross_region(const Image& image, int height, int width, int max_shift, Rng& rng) {
  if (max_shift < 0) {
    throw std::invalid_argument(fmt::format("max shift must be non-negative, got {}", max_shift));
  }
  const int pad = std::uniform_int_distribution<int>(0, max_shift)(rng);
  const int shift_h = std::uniform_int_distribution<int>(0, pad)(rng);
  const int shift_w = std::uniform_int_distribution<int>(0, pad / 2)(rng);
  return make_region_pair(image, height, width, pad, shift_h, shift_w);
}

TokenSequence patchify(const Image& region, int patch_size) {
  if (patch_size < 1 || region.height % patch_size != 0 || region.width % patch_size != 0) {
    throw std::invalid_argument(
        fmt::format("{}x{} region is not divisible by patch size {}", region.height, region.width, patch_size));
  }
  const int t = patch_size;
  const int c = region.channels;
  TokenSequence seq;
  seq.grid_h = region.height / t;
  seq.grid_w = region.width / t;
  seq.patch_size = t;
  seq.channels = c;
  seq.tokens.resize(static_cast<Eigen::Index>(seq.grid_h) * seq.grid_w, t * t * c);
  for (int gy = 0; gy < seq.grid_h; ++gy) {
    for (int gx = 0; gx < seq.grid_w; ++gx) {
      const Eigen::Index i = static_cast<Eigen::Index>(gy) * seq.grid_w + gx;
      for (int py = 0; py < t; ++py) {
        seq.tokens.row(i).segment(py * t * c, t * c) = region.data.row(gy * t + py).segment(gx * t * c, t * c).matrix();
      }
    }
  }
  seq.coords = grid_coords(seq.grid_h, seq.grid_w);
  return seq;
}

Image unpatchify(const TokenSequence& seq) {
  const int t = seq.patch_size;
  const int c = seq.channels;
  if (seq.tokens.rows() != static_cast<Eigen::Index>(seq.grid_h) * seq.grid_w || seq.tokens.cols() != t * t * c) {
    throw std::invalid_argument("token matrix does not match its grid");
  }
  Image region(seq.grid_h * t, seq.grid_w * t, c);
  for (int gy = 0; gy < seq.grid_h; ++gy) {
    for (int gx = 0; gx < seq.grid_w; ++gx) {
      const Eigen::Index i = static_cast<Eigen::Index>(gy) * seq.grid_w + gx;
      for (int py = 0; py < t; ++py) {
        region.data.row(gy * t + py).segment(gx * t * c, t * c) = seq.tokens.row(i).segment(py * t * c, t * c).array();
      }
    }
  }
  return region;
}

CoordsXd grid_coords(int grid_h, int grid_w) {
  CoordsXd coords(static_cast<Eigen::Index>(grid_h) * grid_w, 2);
  for (int y = 0; y < grid_h; ++y) {
    for (int x = 0; x < grid_w; ++x) {
      coords.row(static_cast<Eigen::Index>(y) * grid_w + x) << y, x;
    }
  }
  return coords;
}

CoordsXd relation_coords(double shift_h, double shift_w, int patch_size, int grid_h, int grid_w) {
  if (shift_h < 0 || shift_w < 0) {
    throw std::invalid_argument("relation shifts must be non-negative");
  }
  CoordsXd coords = grid_coords(grid_h, grid_w);
  coords.col(0).array() += shift_h / patch_size;
  coords.col(1).array() += shift_w / patch_size;
  return coords;
}

}  // namespace personmae
