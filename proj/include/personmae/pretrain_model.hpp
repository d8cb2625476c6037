#pragma once

#include "personmae/encoder.hpp"
#include "personmae/losses.hpp"
#include "personmae/masking.hpp"
#include "personmae/region_sampler.hpp"

#include <algorithm>
#include <span>
#include <vector>

namespace personmae {

struct DecoderConfig {
  int embed_dim = 512;
  int depth = 2;
  int num_heads = 16;
  double mlp_ratio = 4.0;
  int input_dim = 384;   // encoder width
  int output_dim = 768;  // T*T*C for the pixel head, encoder width for the feature head

  void validate() const {
    if (depth != 2) {
      throw std::invalid_argument(fmt::format("decoders have exactly two blocks, got depth {}", depth));
    }
    if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads != 0 || embed_dim % 4 != 0) {
      throw std::invalid_argument(
          fmt::format("decoder width {} must be a multiple of 4 and of its {} heads", embed_dim, num_heads));
    }
    if (input_dim <= 0 || output_dim <= 0 || !(mlp_ratio > 0)) {
      throw std::invalid_argument("decoder dimensions must be positive");
    }
  }
};

/// Model architecture plus input geometry.
struct PretrainConfig {
  EncoderConfig encoder = EncoderConfig::vit_small();
  int decoder_embed_dim = 512;
  int decoder_depth = 2;
  int decoder_num_heads = 16;
  double decoder_mlp_ratio = 4.0;
  int image_height = 256;
  int image_width = 128;

  int grid_h() const { return image_height / encoder.patch_size; }
  int grid_w() const { return image_width / encoder.patch_size; }
  int num_tokens() const { return grid_h() * grid_w(); }

  DecoderConfig pixel_decoder() const {
    return {decoder_embed_dim, decoder_depth, decoder_num_heads, decoder_mlp_ratio, encoder.embed_dim,
            encoder.token_dim()};
  }
  DecoderConfig feature_decoder() const {
    return {decoder_embed_dim, decoder_depth, decoder_num_heads, decoder_mlp_ratio, encoder.embed_dim,
            encoder.embed_dim};
  }

  void validate() const {
    encoder.validate();
    pixel_decoder().validate();
    if (image_height < 1 || image_width < 1 || image_height % encoder.patch_size != 0 ||
        image_width % encoder.patch_size != 0) {
      throw std::invalid_argument(fmt::format("image {}x{} is not divisible by patch size {}", image_height,
                                              image_width, encoder.patch_size));
    }
  }

  /// Desk-scale configuration: 64-wide, 2-deep encoder; decoders as wide as the encoder.
  static PretrainConfig tiny() {
    PretrainConfig config;
    config.encoder = EncoderConfig::tiny();
    config.decoder_embed_dim = 64;
    config.decoder_num_heads = 2;
    return config;
  }

  bool operator==(const PretrainConfig&) const = default;
};

/// Pretext-task knobs: region shift and masking, plus loss weights.
struct ObjectiveConfig {
  int max_shift = 64;
  double mask_ratio = 0.75;
  MaskStrategy mask_strategy = MaskStrategy::block;
  double lambda = 1.0;
  double beta = 2.0;
};

/// Prediction decoder: projects encoder features to decoder width, appends N
/// mask tokens carrying the RegionB position embeddings, runs two blocks and
/// applies the output head at the mask-token positions only.
template <typename Scalar>
class Decoder {
 public:
  using Mat = Matrix<Scalar>;

  Decoder() = default;
  explicit Decoder(const DecoderConfig& config) : config_(config) {
    config.validate();
    input_proj = nn::Linear<Scalar>(config.input_dim, config.embed_dim);
    mask_token = nn::Parameter<Scalar>(1, config.embed_dim);
    for (int i = 0; i < config.depth; ++i) blocks.emplace_back(config.embed_dim, config.num_heads, config.mlp_ratio);
    norm = nn::LayerNorm<Scalar>(config.embed_dim);
    head = nn::Linear<Scalar>(config.embed_dim, config.output_dim);
  }

  void init(Rng& rng) {
    input_proj.init(rng);
    nn::normal_init(mask_token.value, 0.02, rng);
    for (auto& block : blocks) block.init(rng);
    head.init(rng);
  }

  const DecoderConfig& config() const { return config_; }

  /// `features`: encoder output, `prefix_tokens` leading rows (class token) carry no position term.
  /// `visible_pe`: decoder-width embeddings of the visible tokens' own coordinates.
  /// `relation_pe`: decoder-width embeddings of the N RegionB relation coordinates.
  Mat forward(const Mat& features, int prefix_tokens, const Mat& visible_pe, const Mat& relation_pe) {
    if (features.rows() != prefix_tokens + visible_pe.rows()) {
      throw std::invalid_argument(fmt::format("decoder got {} feature rows for {} visible coordinates",
                                              features.rows(), visible_pe.rows()));
    }
    if (relation_pe.rows() < 1 || relation_pe.cols() != config_.embed_dim || visible_pe.cols() != config_.embed_dim) {
      throw std::invalid_argument("decoder position embeddings have the wrong shape");
    }
    const Eigen::Index n_enc = features.rows();
    const Eigen::Index n_pred = relation_pe.rows();
    Mat x(n_enc + n_pred, config_.embed_dim);
    x.topRows(n_enc) = input_proj.forward(features);
    x.middleRows(prefix_tokens, visible_pe.rows()) += visible_pe;
    x.bottomRows(n_pred) = relation_pe;
    x.bottomRows(n_pred).rowwise() += mask_token.value.row(0);
    for (auto& block : blocks) x = block.forward(x);
    x = norm.forward(x);
    n_enc_ = n_enc;
    n_pred_ = n_pred;
    return head.forward(x.bottomRows(n_pred));
  }

  /// Returns d(features).
  Mat backward(const Mat& doutput) {
    const Mat dhead = head.backward(doutput);
    Mat dx = Mat::Zero(n_enc_ + n_pred_, config_.embed_dim);
    dx.bottomRows(n_pred_) = dhead;
    dx = norm.backward(dx);
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) dx = it->backward(dx);
    mask_token.grad.row(0) += dx.bottomRows(n_pred_).colwise().sum();
    return input_proj.backward(dx.topRows(dx.rows() - n_pred_));
  }

  template <class Self, class Fn>
  static void visit(Self& self, const std::string& prefix, Fn& fn) {
    for_each_parameter(self.input_proj, prefix + ".input_proj", fn);
    fn(prefix + ".mask_token", self.mask_token);
    for (std::size_t i = 0; i < self.blocks.size(); ++i) {
      for_each_parameter(self.blocks[i], prefix + ".blocks." + std::to_string(i), fn);
    }
    for_each_parameter(self.norm, prefix + ".norm", fn);
    for_each_parameter(self.head, prefix + ".head", fn);
  }

  nn::Linear<Scalar> input_proj;
  nn::Parameter<Scalar> mask_token;
  std::vector<nn::Block<Scalar>> blocks;
  nn::LayerNorm<Scalar> norm;
  nn::Linear<Scalar> head;

 private:
  DecoderConfig config_;
  Eigen::Index n_enc_ = 0;
  Eigen::Index n_pred_ = 0;
};

/// Everything one image contributes to a pre-training step.
struct PreparedSample {
  int pad = 0;
  int shift_h = 0;
  int shift_w = 0;
  MaskLayout mask;
  MatrixXd visible_tokens;
  CoordsXd visible_coords;
  CoordsXd relation_coords;
  MatrixXd region_b_tokens;
  CoordsXd region_b_coords;
  NormalizedPatches<double> targets;
};

PreparedSample prepare_sample(const RegionPair& pair, const MaskLayout& mask, int patch_size);
PreparedSample prepare_sample(const Image& image, const PretrainConfig& config, const ObjectiveConfig& objective,
                              Rng& rng);

struct LossBreakdown {
  double pixel_loss = 0.0;
  double feature_loss = 0.0;
  double total = 0.0;
  double lambda = 1.0;
  int pixel_terms = 0;
  int feature_terms = 0;

  static LossBreakdown combine(double pixel, double feature, double lambda) {
    return {pixel, feature, pixel + lambda * feature, lambda, 0, 0};
  }
};

/// Momentum coefficient: 0.999 rising linearly to 0.9999 over `warm_epochs`, then constant.
inline double gamma_schedule(double epoch, double warm_epochs = 20.0) {
  constexpr double start = 0.999;
  constexpr double end = 0.9999;
  const double t = warm_epochs > 0 ? std::min(std::max(epoch, 0.0) / warm_epochs, 1.0) : 1.0;
  return start + (end - start) * t;
}

/// theta_m <- gamma * theta_m + (1 - gamma) * theta_o on every parameter array.
/// Throws std::runtime_error if the two encoders differ in structure.
template <typename Scalar>
void ema_update(const Encoder<Scalar>& online, Encoder<Scalar>& momentum, Scalar gamma) {
  if (!(gamma >= 0 && gamma <= 1)) {
    throw std::invalid_argument("EMA coefficient must lie in [0, 1]");
  }
  std::vector<std::pair<std::string, const nn::Parameter<Scalar>*>> source;
  nn::for_each_parameter(online, "encoder",
                         [&](const std::string& name, const nn::Parameter<Scalar>& p) { source.emplace_back(name, &p); });
  std::size_t i = 0;
  nn::for_each_parameter(momentum, "encoder", [&](const std::string& name, nn::Parameter<Scalar>& p) {
    if (i >= source.size() || source[i].first != name || source[i].second->value.rows() != p.value.rows() ||
        source[i].second->value.cols() != p.value.cols()) {
      throw std::runtime_error("momentum encoder structure does not match the online encoder at " + name);
    }
    p.value = gamma * p.value + (Scalar(1) - gamma) * source[i].second->value;
    ++i;
  });
  if (i != source.size()) {
    throw std::runtime_error("momentum encoder has fewer parameters than the online encoder");
  }
}

/// Momentum-encoder targets: full RegionB forward, class row dropped, each token standardised.
template <typename Scalar, typename CoordDerived>
Matrix<Scalar> ema_target(Encoder<Scalar>& momentum, const Matrix<Scalar>& region_b_tokens,
                          const Eigen::MatrixBase<CoordDerived>& coords) {
  const Matrix<Scalar> features = momentum.forward(region_b_tokens, coords);
  return nn::standardize_rows<Scalar>(features.bottomRows(region_b_tokens.rows()));
}

/// Online encoder with both decoders, plus the EMA momentum encoder.
template <typename Scalar>
class PretrainModel {
 public:
  using Mat = Matrix<Scalar>;

  struct Outputs {
    Mat encoder_features;
    Mat pixel_predictions;
    Mat feature_predictions;
    Mat feature_targets;
    Mat visible_pe;
    Mat relation_pe;
  };

  PretrainModel() = default;
  explicit PretrainModel(const PretrainConfig& config)
      : encoder(config.encoder),
        momentum_encoder(config.encoder),
        pixel_decoder(config.pixel_decoder()),
        feature_decoder(config.feature_decoder()),
        config_(config) {
    config.validate();
  }

  /// Random initialisation; the momentum encoder starts as a copy of the online encoder.
  void init(Rng& rng) {
    encoder.init(rng);
    pixel_decoder.init(rng);
    feature_decoder.init(rng);
    momentum_encoder = encoder;
  }

  const PretrainConfig& config() const { return config_; }

  /// Loss for one prepared sample. With `backward`, gradients scaled by
  /// `grad_scale` accumulate into the online encoder and both decoders; the
  /// momentum encoder never receives gradients.
  LossBreakdown forward_backward(const PreparedSample& sample, const ObjectiveConfig& objective, bool backward,
                                 Scalar grad_scale = Scalar(1), Outputs* outputs = nullptr) {
    const int dec_dim = config_.decoder_embed_dim;
    const int prefix = encoder.prefix_tokens();
    const Mat visible = sample.visible_tokens.cast<Scalar>();
    const Mat features = encoder.forward(visible, sample.visible_coords.cast<Scalar>());
    // One set of position embeddings feeds both decoders.
    const Mat visible_pe = sincos_embed_2d<Scalar>(sample.visible_coords, dec_dim);
    const Mat relation_pe = sincos_embed_2d<Scalar>(sample.relation_coords, dec_dim);
    const Mat pixel_pred = pixel_decoder.forward(features, prefix, visible_pe, relation_pe);
    const Mat feature_pred = feature_decoder.forward(features, prefix, visible_pe, relation_pe);

    const Mat pixel_targets = sample.targets.targets.cast<Scalar>();
    const Mat feature_targets = ema_target<Scalar>(momentum_encoder, sample.region_b_tokens.cast<Scalar>(),
                                                   sample.region_b_coords.cast<Scalar>());

    const auto lp = pixel_loss<Scalar>(pixel_pred, pixel_targets);
    const auto lf = smooth_l1<Scalar>(feature_pred, feature_targets, static_cast<Scalar>(objective.beta));
    LossBreakdown result = LossBreakdown::combine(static_cast<double>(lp.value), static_cast<double>(lf.value),
                                                  objective.lambda);
    result.pixel_terms = static_cast<int>(lp.per_token.size());
    result.feature_terms = static_cast<int>(lf.per_token.size());

    if (backward) {
      Mat dfeatures = pixel_decoder.backward(lp.grad * grad_scale);
      dfeatures += feature_decoder.backward(lf.grad * (grad_scale * static_cast<Scalar>(objective.lambda)));
      encoder.backward(dfeatures);
    }
    if (outputs != nullptr) {
      *outputs = {features, pixel_pred, feature_pred, feature_targets, visible_pe, relation_pe};
    }
    return result;
  }

  void zero_grad() {
    visit_trainable([](const std::string&, nn::Parameter<Scalar>& p) { p.zero_grad(); });
  }

  /// Online encoder and decoders: everything the optimiser updates.
  template <class Fn>
  void visit_trainable(Fn&& fn) {
    nn::for_each_parameter(encoder, "encoder", fn);
    nn::for_each_parameter(pixel_decoder, "pixel_decoder", fn);
    nn::for_each_parameter(feature_decoder, "feature_decoder", fn);
  }
  template <class Fn>
  void visit_trainable(Fn&& fn) const {
    nn::for_each_parameter(encoder, "encoder", fn);
    nn::for_each_parameter(pixel_decoder, "pixel_decoder", fn);
    nn::for_each_parameter(feature_decoder, "feature_decoder", fn);
  }

  template <class Fn>
  void visit_momentum(Fn&& fn) {
    nn::for_each_parameter(momentum_encoder, "momentum_encoder", fn);
  }
  template <class Fn>
  void visit_momentum(Fn&& fn) const {
    nn::for_each_parameter(momentum_encoder, "momentum_encoder", fn);
  }

  Encoder<Scalar> encoder;
  Encoder<Scalar> momentum_encoder;
  Decoder<Scalar> pixel_decoder;
  Decoder<Scalar> feature_decoder;

 private:
  PretrainConfig config_;
};

/// Batch loss: per-sample losses averaged; gradients (when requested) are the
/// gradients of that average.
template <typename Scalar>
LossBreakdown forward_pretrain(std::span<const PreparedSample> batch, PretrainModel<Scalar>& model,
                               const ObjectiveConfig& objective, bool backward) {
  if (batch.empty()) {
    throw std::invalid_argument("forward_pretrain needs a non-empty batch");
  }
  const Scalar scale = Scalar(1) / static_cast<Scalar>(batch.size());
  double pixel = 0.0;
  double feature = 0.0;
  int pixel_terms = 0;
  int feature_terms = 0;
  for (const auto& sample : batch) {
    const auto loss = model.forward_backward(sample, objective, backward, scale);
    pixel += loss.pixel_loss;
    feature += loss.feature_loss;
    pixel_terms += loss.pixel_terms;
    feature_terms += loss.feature_terms;
  }
  auto result = LossBreakdown::combine(pixel / batch.size(), feature / batch.size(), objective.lambda);
  result.pixel_terms = pixel_terms;
  result.feature_terms = feature_terms;
  return result;
}

/// Samples regions and masks for each image from `rng`, then evaluates forward_pretrain.
template <typename Scalar>
LossBreakdown forward_pretrain(std::span<const Image> images, PretrainModel<Scalar>& model,
                               const ObjectiveConfig& objective, Rng& rng, bool backward) {
  std::vector<PreparedSample> batch;
  batch.reserve(images.size());
  for (const auto& image : images) batch.push_back(prepare_sample(image, model.config(), objective, rng));
  return forward_pretrain<Scalar>(std::span<const PreparedSample>(batch), model, objective, backward);
}

}  // namespace personmae
