#pragma once

#include "personmae/nn.hpp"
#include "personmae/position_embedding.hpp"

#include <fmt/format.h>

#include <vector>

namespace personmae {

struct EncoderConfig {
  int embed_dim = 384;
  int depth = 12;
  int num_heads = 6;
  double mlp_ratio = 4.0;
  int patch_size = 16;
  int in_channels = 3;
  bool use_class_token = true;

  int token_dim() const { return patch_size * patch_size * in_channels; }

  void validate() const {
    if (embed_dim <= 0 || depth < 0 || num_heads <= 0 || patch_size <= 0 || in_channels <= 0 || !(mlp_ratio > 0)) {
      throw std::invalid_argument("encoder dimensions must be positive");
    }
    if (embed_dim % num_heads != 0) {
      throw std::invalid_argument(fmt::format("embed_dim {} not divisible by num_heads {}", embed_dim, num_heads));
    }
    if (embed_dim % 4 != 0) {
      throw std::invalid_argument(fmt::format("embed_dim {} must be a multiple of 4", embed_dim));
    }
  }

  static EncoderConfig tiny() { return {64, 2, 2, 4.0, 16, 3, true}; }
  static EncoderConfig vit_small() { return {384, 12, 6, 4.0, 16, 3, true}; }
  static EncoderConfig vit_base() { return {768, 12, 12, 4.0, 16, 3, true}; }

  bool operator==(const EncoderConfig&) const = default;
};

/// ViT encoder: linear patch embedding, fixed sin-cos positions, optional class
/// token (no positional term), pre-norm blocks, final LayerNorm.
template <typename Scalar>
class Encoder {
 public:
  using Mat = Matrix<Scalar>;

  Encoder() = default;
  explicit Encoder(const EncoderConfig& config) : config_(config) {
    config.validate();
    patch_embed = nn::Linear<Scalar>(config.token_dim(), config.embed_dim);
    if (config.use_class_token) cls_token = nn::Parameter<Scalar>(1, config.embed_dim);
    blocks.reserve(config.depth);
    for (int i = 0; i < config.depth; ++i) blocks.emplace_back(config.embed_dim, config.num_heads, config.mlp_ratio);
    norm = nn::LayerNorm<Scalar>(config.embed_dim);
  }

  void init(Rng& rng) {
    patch_embed.init(rng);
    if (config_.use_class_token) nn::normal_init(cls_token.value, 0.02, rng);
    for (auto& block : blocks) block.init(rng);
  }

  const EncoderConfig& config() const { return config_; }
  int prefix_tokens() const { return config_.use_class_token ? 1 : 0; }

  /// Linear projection of each token; order preserved.
  Mat patch_embedding(const Mat& tokens) {
    check_tokens(tokens);
    return patch_embed.forward(tokens);
  }

  /// Patch embedding plus sin-cos position embedding of `coords`.
  template <typename CoordDerived>
  Mat embed(const Mat& tokens, const Eigen::MatrixBase<CoordDerived>& coords) {
    if (coords.rows() != tokens.rows()) {
      throw std::invalid_argument("token and coordinate counts differ");
    }
    return patch_embedding(tokens) + sincos_embed_2d<Scalar>(coords, config_.embed_dim);
  }

  /// Runs the transformer on already position-embedded tokens. Output has one
  /// extra leading row when the class token is enabled.
  Mat forward_embedded(const Mat& embeddings) {
    Mat x(embeddings.rows() + prefix_tokens(), config_.embed_dim);
    if (config_.use_class_token) x.row(0) = cls_token.value.row(0);
    x.bottomRows(embeddings.rows()) = embeddings;
    if (x.rows() < 1) {
      throw std::invalid_argument("encoder input sequence is empty");
    }
    for (auto& block : blocks) x = block.forward(x);
    return norm.forward(x);
  }

  template <typename CoordDerived>
  Mat forward(const Mat& tokens, const Eigen::MatrixBase<CoordDerived>& coords) {
    return forward_embedded(embed(tokens, coords));
  }

  /// Backpropagates through forward_embedded; returns d(embeddings).
  Mat backward_embedded(const Mat& doutput) {
    Mat dx = norm.backward(doutput);
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) dx = it->backward(dx);
    if (config_.use_class_token) cls_token.grad.row(0) += dx.row(0);
    return dx.bottomRows(dx.rows() - prefix_tokens());
  }

  /// Backpropagates through forward (tokens are data; their gradient is dropped).
  void backward(const Mat& doutput) { patch_embed.backward(backward_embedded(doutput)); }

  template <class Self, class Fn>
  static void visit(Self& self, const std::string& prefix, Fn& fn) {
    for_each_parameter(self.patch_embed, prefix + ".patch_embed", fn);
    if (self.config_.use_class_token) fn(prefix + ".cls_token", self.cls_token);
    for (std::size_t i = 0; i < self.blocks.size(); ++i) {
      for_each_parameter(self.blocks[i], prefix + ".blocks." + std::to_string(i), fn);
    }
    for_each_parameter(self.norm, prefix + ".norm", fn);
  }

  nn::Linear<Scalar> patch_embed;
  nn::Parameter<Scalar> cls_token;
  std::vector<nn::Block<Scalar>> blocks;
  nn::LayerNorm<Scalar> norm;

 private:
  void check_tokens(const Mat& tokens) const {
    if (tokens.cols() != config_.token_dim()) {
      throw std::invalid_argument(
          fmt::format("token length {} does not match patch projection input {}", tokens.cols(), config_.token_dim()));
    }
  }

  EncoderConfig config_;
};

}  // namespace personmae
