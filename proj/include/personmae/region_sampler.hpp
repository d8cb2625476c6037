#pragma once

#include "personmae/image.hpp"

namespace personmae {

/// Two same-size crops of one resized image. RegionA sits at the canvas origin,
/// RegionB at (shift_h, shift_w).
struct RegionPair {
  Image region_a;
  Image region_b;
  int pad = 0;  // p: canvas is (H + p) x (W + floor(p / 2))
  int shift_h = 0;
  int shift_w = 0;
  int height = 0;
  int width = 0;
};

/// Patch tokens of one region, row-major over the patch grid. Each token is the
/// (row, column, channel) flattening of a T x T x C patch.
struct TokenSequence {
  MatrixXd tokens;  // N x (T * T * C)
  CoordsXd coords;  // N x 2, (row, col) grid positions
  int grid_h = 0;
  int grid_w = 0;
  int patch_size = 0;
  int channels = 0;

  Eigen::Index size() const { return tokens.rows(); }
};

/// Resizes to (H + p, W + floor(p/2)) with p ~ U{0..max_shift}, then crops
/// RegionA at (0, 0) and RegionB at (s_h ~ U{0..p}, s_w ~ U{0..floor(p/2)}).
RegionPair sample_cross_region(const Image& image, int height, int width, int max_shift, Rng& rng);

/// The deterministic part of sample_cross_region for a fixed (p, s_h, s_w).
RegionPair make_region_pair(const Image& image, int height, int width, int pad, int shift_h, int shift_w);

TokenSequence patchify(const Image& region, int patch_size);

/// Inverse of patchify.
Image unpatchify(const TokenSequence& tokens);

/// Integer (row, col) positions of a grid_h x grid_w patch grid, row-major.
CoordsXd grid_coords(int grid_h, int grid_w);

/// RegionB token positions in RegionA's frame: (x + s_h / T, y + s_w / T).
CoordsXd relation_coords(double shift_h, double shift_w, int patch_size, int grid_h, int grid_w);

}  // namespace personmae
