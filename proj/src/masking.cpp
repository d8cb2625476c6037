#include "personmae/masking.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace personmae {

MaskStrategy parse_mask_strategy(const std::string& text) {
  if (text == "block") return MaskStrategy::block;
  if (text == "random") return MaskStrategy::random;
  throw std::invalid_argument("unknown mask strategy: " + text);
}

std::string to_string(MaskStrategy strategy) { return strategy == MaskStrategy::block ? "block" : "random"; }

int MaskLayout::masked_count() const { return static_cast<int>(std::count(flags.begin(), flags.end(), true)); }

int masked_target(int cells, double ratio) { return static_cast<int>(std::lround(ratio * cells)); }

namespace {

void check_mask_args(int grid_h, int grid_w, double ratio) {
  if (grid_h < 1 || grid_w < 1) {
    throw std::invalid_argument(fmt::format("mask grid must be non-empty, got {}x{}", grid_h, grid_w));
  }
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument(fmt::format("mask ratio must lie in [0, 1], got {}", ratio));
  }
}

MaskLayout empty_layout(int grid_h, int grid_w, double ratio) {
  MaskLayout layout;
  layout.grid_h = grid_h;
  layout.grid_w = grid_w;
  layout.ratio = ratio;
  layout.flags.assign(static_cast<std::size_t>(grid_h) * grid_w, false);
  return layout;
}

}  // namespace

MaskLayout block_wise_mask(int grid_h, int grid_w, double ratio, Rng& rng) {
  check_mask_args(grid_h, grid_w, ratio);
  MaskLayout layout = empty_layout(grid_h, grid_w, ratio);
  const int target = masked_target(layout.size(), ratio);
  const double log_aspect = std::log(0.3);
  int count = 0;
  std::vector<int> last_new;
  while (count < target) {
    const double max_area = std::max<double>(kMinMaskBlock, target - count);
    const double area = std::uniform_real_distribution<double>(kMinMaskBlock, max_area)(rng);
    const double aspect = std::exp(std::uniform_real_distribution<double>(log_aspect, -log_aspect)(rng));
    const int h = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, grid_h);
    const int w = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect))), 1, grid_w);
    const int top = std::uniform_int_distribution<int>(0, grid_h - h)(rng);
    const int left = std::uniform_int_distribution<int>(0, grid_w - w)(rng);
    layout.placed_blocks.push_back({top, left, h, w});
    last_new.clear();
    for (int y = top; y < top + h; ++y) {
      for (int x = left; x < left + w; ++x) {
        const int cell = y * grid_w + x;
        if (!layout.flags[cell]) {
          layout.flags[cell] = true;
          last_new.push_back(cell);
        }
      }
    }
    count += static_cast<int>(last_new.size());
  }
  // Overshoot is bounded by the cells the last block added.
  while (count > target) {
    const auto pick = std::uniform_int_distribution<std::size_t>(0, last_new.size() - 1)(rng);
    const int cell = last_new[pick];
    last_new.erase(last_new.begin() + static_cast<std::ptrdiff_t>(pick));
    layout.flags[cell] = false;
    layout.trimmed.push_back(cell);
    --count;
  }
  return layout;
}

MaskLayout random_mask(int grid_h, int grid_w, double ratio, Rng& rng) {
  check_mask_args(grid_h, grid_w, ratio);
  MaskLayout layout = empty_layout(grid_h, grid_w, ratio);
  const int n = layout.size();
  const int target = masked_target(n, ratio);
  std::vector<int> cells(n);
  std::iota(cells.begin(), cells.end(), 0);
  // Partial Fisher-Yates: the first `target` entries are a uniform sample without replacement.
  for (int i = 0; i < target; ++i) {
    const int j = std::uniform_int_distribution<int>(i, n - 1)(rng);
    std::swap(cells[i], cells[j]);
    layout.flags[cells[i]] = true;
  }
  return layout;
}

MaskLayout make_mask(MaskStrategy strategy, int grid_h, int grid_w, double ratio, Rng& rng) {
  return strategy == MaskStrategy::block ? block_wise_mask(grid_h, grid_w, ratio, rng)
                                         : random_mask(grid_h, grid_w, ratio, rng);
}

VisibleSplit split_visible(const TokenSequence& tokens, const MaskLayout& layout) {
  if (tokens.grid_h != layout.grid_h || tokens.grid_w != layout.grid_w ||
      tokens.size() != static_cast<Eigen::Index>(layout.flags.size())) {
    throw std::invalid_argument(fmt::format("mask grid {}x{} does not match token grid {}x{}", layout.grid_h,
                                            layout.grid_w, tokens.grid_h, tokens.grid_w));
  }
  VisibleSplit split;
  for (int i = 0; i < layout.size(); ++i) {
    (layout.flags[i] ? split.masked_indices : split.visible_indices).push_back(i);
  }
  split.visible.grid_h = tokens.grid_h;
  split.visible.grid_w = tokens.grid_w;
  split.visible.patch_size = tokens.patch_size;
  split.visible.channels = tokens.channels;
  split.visible.tokens = tokens.tokens(split.visible_indices, Eigen::all);
  split.visible.coords = tokens.coords(split.visible_indices, Eigen::all);
  return split;
}

MatrixXd merge_tokens(const VisibleSplit& split, const MatrixXd& masked_tokens) {
  if (masked_tokens.rows() != static_cast<Eigen::Index>(split.masked_indices.size()) ||
      (masked_tokens.rows() > 0 && masked_tokens.cols() != split.visible.tokens.cols())) {
    throw std::invalid_argument("masked token block does not match the split");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(split.visible_indices.size() + split.masked_indices.size());
  MatrixXd merged(n, split.visible.tokens.cols());
  merged(split.visible_indices, Eigen::all) = split.visible.tokens;
  merged(split.masked_indices, Eigen::all) = masked_tokens;
  return merged;
}

std::string mask_to_text(const MaskLayout& layout) {
  std::string text;
  for (int y = 0; y < layout.grid_h; ++y) {
    for (int x = 0; x < layout.grid_w; ++x) {
      text += layout.flags[y * layout.grid_w + x] ? '#' : '.';
    }
    text += '\n';
  }
  return text;
}

}  // namespace personmae
