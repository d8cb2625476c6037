#pragma once

// Transformer building blocks with hand-written backward passes.
//
// Every layer caches what its backward pass needs during forward(); a
// backward() call must follow the matching forward() on the same instance.
// Gradients accumulate into Parameter::grad until zero_grad().

#include "personmae/types.hpp"

#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

namespace personmae::nn {

template <typename Scalar>
struct Parameter {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(Eigen::Index rows, Eigen::Index cols) : value(Matrix<Scalar>::Zero(rows, cols)), grad(Matrix<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Calls fn(name, parameter) for every parameter of `layer`, depth first.
/// Constness of `layer` propagates to the parameters handed to `fn`.
template <class Layer, class Fn>
void for_each_parameter(Layer& layer, const std::string& prefix, Fn&& fn) {
  std::remove_const_t<Layer>::visit(layer, prefix, fn);
}

template <typename Scalar>
void xavier_uniform(Matrix<Scalar>& w, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(u(rng));
}

template <typename Scalar>
void normal_init(Matrix<Scalar>& w, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(n(rng));
}

/// y = x W^T + b, W is (out x in).
template <typename Scalar>
class Linear {
 public:
  using Mat = Matrix<Scalar>;

  Linear() = default;
  Linear(int in_features, int out_features) : weight(out_features, in_features), bias(1, out_features) {}

  void init(Rng& rng) {
    xavier_uniform(weight.value, rng);
    bias.value.setZero();
  }

  int in_features() const { return static_cast<int>(weight.value.cols()); }
  int out_features() const { return static_cast<int>(weight.value.rows()); }

  Mat forward(const Mat& x) {
    input_ = x;
    return apply(x);
  }

  Mat apply(const Mat& x) const {
    Mat y = x * weight.value.transpose();
    y.rowwise() += bias.value.row(0);
    return y;
  }

  Mat backward(const Mat& dy) {
    weight.grad.noalias() += dy.transpose() * input_;
    bias.grad.row(0) += dy.colwise().sum();
    return dy * weight.value;
  }

  template <class Self, class Fn>
  static void visit(Self& self, const std::string& prefix, Fn& fn) {
    fn(prefix + ".weight", self.weight);
    fn(prefix + ".bias", self.bias);
  }

  Parameter<Scalar> weight;
  Parameter<Scalar> bias;

 private:
  Mat input_;
};

/// Per-token normalisation over channels with learned scale and offset.
template <typename Scalar>
class LayerNorm {
 public:
  using Mat = Matrix<Scalar>;
  static constexpr double kEps = 1e-6;

  LayerNorm() = default;
  explicit LayerNorm(int dim) : weight(1, dim), bias(1, dim) { weight.value.setOnes(); }

  Mat forward(const Mat& x) {
    const Eigen::Index d = x.cols();
    Vector<Scalar> mean = x.rowwise().mean();
    normalized_ = x.colwise() - mean;
    Vector<Scalar> var = normalized_.rowwise().squaredNorm() / static_cast<Scalar>(d);
    inv_std_ = (var.array() + static_cast<Scalar>(kEps)).rsqrt().matrix();
    normalized_ = inv_std_.asDiagonal() * normalized_;
    Mat y = normalized_.array().rowwise() * weight.value.row(0).array();
    y.rowwise() += bias.value.row(0);
    return y;
  }

  Mat backward(const Mat& dy) {
    const Scalar d = static_cast<Scalar>(dy.cols());
    weight.grad.row(0) += dy.cwiseProduct(normalized_).colwise().sum();
    bias.grad.row(0) += dy.colwise().sum();
    Mat dxhat = dy.array().rowwise() * weight.value.row(0).array();
    Vector<Scalar> mean_dxhat = dxhat.rowwise().sum() / d;
    Vector<Scalar> mean_dxhat_xhat = dxhat.cwiseProduct(normalized_).rowwise().sum() / d;
    Mat dx = dxhat.colwise() - mean_dxhat;
    dx -= mean_dxhat_xhat.asDiagonal() * normalized_;
    return inv_std_.asDiagonal() * dx;
  }

  template <class Self, class Fn>
  static void visit(Self& self, const std::string& prefix, Fn& fn) {
    fn(prefix + ".weight", self.weight);
    fn(prefix + ".bias", self.bias);
  }

  Parameter<Scalar> weight;
  Parameter<Scalar> bias;

 private:
  Mat normalized_;
  Vector<Scalar> inv_std_;
};

/// Exact (erf) GELU.
template <typename Scalar>
Matrix<Scalar> gelu(const Matrix<Scalar>& x) {
  return x.unaryExpr([](Scalar v) { return Scalar(0.5) * v * (Scalar(1) + std::erf(v * Scalar(M_SQRT1_2))); });
}

template <typename Scalar>
Matrix<Scalar> gelu_grad(const Matrix<Scalar>& x) {
  return x.unaryExpr([](Scalar v) {
    const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(v * Scalar(M_SQRT1_2)));
    const Scalar pdf = std::exp(Scalar(-0.5) * v * v) * Scalar(0.5 * M_2_SQRTPI * M_SQRT1_2);
    return cdf + v * pdf;
  });
}

/// Row-wise softmax.
template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& s) {
  Matrix<Scalar> p = s.colwise() - s.rowwise().maxCoeff();
  p = p.array().exp();
  Vector<Scalar> sums = p.rowwise().sum();
  return sums.cwiseInverse().asDiagonal() * p;
}

template <typename Scalar>
class MultiHeadAttention {
 public:
  using Mat = Matrix<Scalar>;

  MultiHeadAttention() = default;
  MultiHeadAttention(int dim, int num_heads) : qkv(dim, 3 * dim), proj(dim, dim), num_heads_(num_heads) {}

  void init(Rng& rng) {
    qkv.init(rng);
    proj.init(rng);
  }

  Mat forward(const Mat& x) {
    const Eigen::Index n = x.rows();
    const Eigen::Index dim = x.cols();
    const Eigen::Index head_dim = dim / num_heads_;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));
    qkv_ = qkv.forward(x);
    probs_.resize(num_heads_);
    Mat heads(n, dim);
    for (int h = 0; h < num_heads_; ++h) {
      const auto q = qkv_.middleCols(h * head_dim, head_dim);
      const auto k = qkv_.middleCols(dim + h * head_dim, head_dim);
      const auto v = qkv_.middleCols(2 * dim + h * head_dim, head_dim);
      probs_[h] = softmax_rows<Scalar>((q * k.transpose()) * scale);
      heads.middleCols(h * head_dim, head_dim).noalias() = probs_[h] * v;
    }
    return proj.forward(heads);
  }

  Mat backward(const Mat& dy) {
    const Mat dheads = proj.backward(dy);
    const Eigen::Index n = dheads.rows();
    const Eigen::Index dim = dheads.cols();
    const Eigen::Index head_dim = dim / num_heads_;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));
    Mat dqkv(n, 3 * dim);
    for (int h = 0; h < num_heads_; ++h) {
      const auto q = qkv_.middleCols(h * head_dim, head_dim);
      const auto k = qkv_.middleCols(dim + h * head_dim, head_dim);
      const auto v = qkv_.middleCols(2 * dim + h * head_dim, head_dim);
      const auto dout = dheads.middleCols(h * head_dim, head_dim);
      const Mat& p = probs_[h];
      const Mat dp = dout * v.transpose();
      dqkv.middleCols(2 * dim + h * head_dim, head_dim).noalias() = p.transpose() * dout;
      Vector<Scalar> row_dot = dp.cwiseProduct(p).rowwise().sum();
      const Mat ds = p.cwiseProduct(Mat(dp.colwise() - row_dot)) * scale;
      dqkv.middleCols(h * head_dim, head_dim).noalias() = ds * k;
      dqkv.middleCols(dim + h * head_dim, head_dim).noalias() = ds.transpose() * q;
    }
    return qkv.backward(dqkv);
  }

  template <class Self, class Fn>
  static void visit(Self& self, const std::string& prefix, Fn& fn) {
    for_each_parameter(self.qkv, prefix + ".qkv", fn);
    for_each_parameter(self.proj, prefix + ".proj", fn);
  }

  Linear<Scalar> qkv;
  Linear<Scalar> proj;

 private:
  int num_heads_ = 1;
  Mat qkv_;
  std::vector<Mat> probs_;
};

template <typename Scalar>
class Mlp {
 public:
  using Mat = Matrix<Scalar>;

  Mlp() = default;
  Mlp(int dim, int hidden) : fc1(dim, hidden), fc2(hidden, dim) {}

  void init(Rng& rng) {
    fc1.init(rng);
    fc2.init(rng);
  }

  Mat forward(const Mat& x) {
    pre_activation_ = fc1.forward(x);
    return fc2.forward(gelu<Scalar>(pre_activation_));
  }

  Mat backward(const Mat& dy) {
    const Mat dh = fc2.backward(dy).cwiseProduct(gelu_grad<Scalar>(pre_activation_));
    return fc1.backward(dh);
  }

  template <class Self, class Fn>
  static void visit(Self& self, const std::string& prefix, Fn& fn) {
    for_each_parameter(self.fc1, prefix + ".fc1", fn);
    for_each_parameter(self.fc2, prefix + ".fc2", fn);
  }

  Linear<Scalar> fc1;
  Linear<Scalar> fc2;

 private:
  Mat pre_activation_;
};

/// Pre-norm transformer block: h = x + attn(ln1(x)); y = h + mlp(ln2(h)).
template <typename Scalar>
class Block {
 public:
  using Mat = Matrix<Scalar>;

  Block() = default;
  Block(int dim, int num_heads, double mlp_ratio)
      : norm1(dim), attn(dim, num_heads), norm2(dim), mlp(dim, static_cast<int>(std::lround(dim * mlp_ratio))) {}

  void init(Rng& rng) {
    attn.init(rng);
    mlp.init(rng);
  }

  Mat forward(const Mat& x) {
    Mat h = x + attn.forward(norm1.forward(x));
    return h + mlp.forward(norm2.forward(h));
  }

  Mat backward(const Mat& dy) {
    Mat dh = dy + norm2.backward(mlp.backward(dy));
    return dh + norm1.backward(attn.backward(dh));
  }

  template <class Self, class Fn>
  static void visit(Self& self, const std::string& prefix, Fn& fn) {
    for_each_parameter(self.norm1, prefix + ".norm1", fn);
    for_each_parameter(self.attn, prefix + ".attn", fn);
    for_each_parameter(self.norm2, prefix + ".norm2", fn);
    for_each_parameter(self.mlp, prefix + ".mlp", fn);
  }

  LayerNorm<Scalar> norm1;
  MultiHeadAttention<Scalar> attn;
  LayerNorm<Scalar> norm2;
  Mlp<Scalar> mlp;
};

/// Parameter-free per-row standardisation (x - mean) / sqrt(var + eps).
template <typename Scalar>
Matrix<Scalar> standardize_rows(const Matrix<Scalar>& x, double eps = 1e-6) {
  Vector<Scalar> mean = x.rowwise().mean();
  Matrix<Scalar> centered = x.colwise() - mean;
  Vector<Scalar> var = centered.rowwise().squaredNorm() / static_cast<Scalar>(x.cols());
  Vector<Scalar> inv_std = (var.array() + static_cast<Scalar>(eps)).rsqrt().matrix();
  return inv_std.asDiagonal() * centered;
}

}  // namespace personmae::nn
