#pragma once

#include "personmae/region_sampler.hpp"

#include <string>
#include <vector>

namespace personmae {

enum class MaskStrategy { block, random };

MaskStrategy parse_mask_strategy(const std::string& text);
std::string to_string(MaskStrategy strategy);

struct MaskBlock {
  int top;
  int left;
  int height;
  int width;
};

struct MaskLayout {
  int grid_h = 0;
  int grid_w = 0;
  std::vector<bool> flags;  // row-major, true = masked
  double ratio = 0.0;
  std::vector<MaskBlock> placed_blocks;
  std::vector<int> trimmed;  // cells of the last block unmasked to hit the exact count

  int size() const { return grid_h * grid_w; }
  int masked_count() const;
};

/// round(ratio * N), the exact number of masked cells.
int masked_target(int cells, double ratio);

inline constexpr int kMinMaskBlock = 4;

/// BEiT-style block masking: rectangles of random area (>= kMinMaskBlock cells) and
/// log-uniform aspect in [0.3, 1/0.3] until the target is reached, then random cells
/// of the last rectangle are unmasked so exactly masked_target cells stay masked.
MaskLayout block_wise_mask(int grid_h, int grid_w, double ratio, Rng& rng);

MaskLayout random_mask(int grid_h, int grid_w, double ratio, Rng& rng);

MaskLayout make_mask(MaskStrategy strategy, int grid_h, int grid_w, double ratio, Rng& rng);

struct VisibleSplit {
  TokenSequence visible;  // original order, original coords
  std::vector<int> visible_indices;
  std::vector<int> masked_indices;  // ascending
};

VisibleSplit split_visible(const TokenSequence& tokens, const MaskLayout& layout);

/// Re-inserts masked tokens: inverse of split_visible.
MatrixXd merge_tokens(const VisibleSplit& split, const MatrixXd& masked_tokens);

/// Row-major grid of '.' (visible) and '#' (masked), one line per grid row.
std::string mask_to_text(const MaskLayout& layout);

}  // namespace personmae
