#include "personmae/pretrain_model.hpp"

namespace personmae {

PreparedSample prepare_sample(const RegionPair& pair, const MaskLayout& mask, int patch_size) {
  const TokenSequence tokens_a = patchify(pair.region_a, patch_size);
  const TokenSequence tokens_b = patchify(pair.region_b, patch_size);
  VisibleSplit split = split_visible(tokens_a, mask);

  PreparedSample sample;
  sample.pad = pair.pad;
  sample.shift_h = pair.shift_h;
  sample.shift_w = pair.shift_w;
  sample.mask = mask;
  sample.visible_tokens = std::move(split.visible.tokens);
  sample.visible_coords = std::move(split.visible.coords);
  sample.relation_coords = relation_coords(pair.shift_h, pair.shift_w, patch_size, tokens_b.grid_h, tokens_b.grid_w);
  sample.region_b_tokens = tokens_b.tokens;
  sample.region_b_coords = tokens_b.coords;
  sample.targets = normalize_patch_targets<double>(tokens_b.tokens);
  return sample;
}

PreparedSample prepare_sample(const Image& image, const PretrainConfig& config, const ObjectiveConfig& objective,
                              Rng& rng) {
  const RegionPair pair = sample_cross_region(image, config.image_height, config.image_width, objective.max_shift, rng);
  const MaskLayout mask =
      make_mask(objective.mask_strategy, config.grid_h(), config.grid_w(), objective.mask_ratio, rng);
  return prepare_sample(pair, mask, config.encoder.patch_size);
}

}  // namespace personmae
