#pragma once

#include "personmae/types.hpp"

#include <cmath>

namespace personmae {

/// A reduced loss with its per-token terms and d(loss)/d(prediction).
template <typename Scalar>
struct LossValue {
  Scalar value = 0;
  Vector<Scalar> per_token;
  Matrix<Scalar> grad;
};

template <typename Scalar>
struct NormalizedPatches {
  Matrix<Scalar> targets;
  Vector<Scalar> mean;
  Vector<Scalar> stddev;  // population standard deviation
};

inline constexpr double kPatchNormEps = 1e-6;

/// x_hat = (x - mean) / (std + eps) per patch, over all T*T*C elements.
template <typename Scalar>
NormalizedPatches<Scalar> normalize_patch_targets(const Matrix<Scalar>& patches) {
  if (patches.cols() < 2) {
    throw std::invalid_argument("patch normalisation needs at least two elements per patch");
  }
  NormalizedPatches<Scalar> out;
  out.mean = patches.rowwise().mean();
  // Second pass removes the rounding left in the first mean, so constant patches centre to exact zeros.
  out.mean += (patches.colwise() - out.mean).rowwise().mean();
  Matrix<Scalar> centered = patches.colwise() - out.mean;
  out.stddev = (centered.rowwise().squaredNorm() / static_cast<Scalar>(patches.cols())).cwiseSqrt();
  Vector<Scalar> scale = (out.stddev.array() + static_cast<Scalar>(kPatchNormEps)).inverse().matrix();
  out.targets = scale.asDiagonal() * centered;
  return out;
}

/// Inverse of normalize_patch_targets given the stored statistics.
template <typename Scalar>
Matrix<Scalar> denormalize_patches(const Matrix<Scalar>& normalized, const Vector<Scalar>& mean,
                                   const Vector<Scalar>& stddev) {
  Vector<Scalar> scale = stddev.array() + static_cast<Scalar>(kPatchNormEps);
  Matrix<Scalar> out = scale.asDiagonal() * normalized;
  return out.colwise() + mean;
}

template <typename Scalar>
void check_same_shape(const Matrix<Scalar>& a, const Matrix<Scalar>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() == 0) {
    throw std::invalid_argument(std::string(what) + ": prediction and target shapes differ or are empty");
  }
}

/// Mean over tokens of the per-token mean squared error.
template <typename Scalar>
LossValue<Scalar> pixel_loss(const Matrix<Scalar>& predictions, const Matrix<Scalar>& targets) {
  check_same_shape(predictions, targets, "pixel_loss");
  const Scalar n = static_cast<Scalar>(predictions.rows());
  const Scalar e = static_cast<Scalar>(predictions.cols());
  const Matrix<Scalar> diff = predictions - targets;
  LossValue<Scalar> loss;
  loss.per_token = diff.rowwise().squaredNorm() / e;
  loss.value = loss.per_token.sum() / n;
  loss.grad = diff * (Scalar(2) / (n * e));
  return loss;
}

/// Elementwise smooth-L1 of d = y - f: 0.5 d^2 / beta inside |d| < beta, |d| - 0.5 beta outside.
template <typename Scalar>
Scalar smooth_l1_element(Scalar d, Scalar beta) {
  const Scalar a = std::abs(d);
  return a < beta ? Scalar(0.5) * d * d / beta : a - Scalar(0.5) * beta;
}

/// Smooth-L1 averaged over channels then tokens. The target is a constant
/// (stop-gradient): only d(loss)/d(prediction) is produced.
template <typename Scalar>
LossValue<Scalar> smooth_l1(const Matrix<Scalar>& predictions, const Matrix<Scalar>& targets, Scalar beta) {
  if (!(beta > 0)) {
    throw std::invalid_argument("smooth_l1 beta must be positive");
  }
  check_same_shape(predictions, targets, "smooth_l1");
  const Scalar n = static_cast<Scalar>(predictions.rows());
  const Scalar c = static_cast<Scalar>(predictions.cols());
  const Matrix<Scalar> diff = predictions - targets;
  LossValue<Scalar> loss;
  loss.per_token = diff.unaryExpr([beta](Scalar d) { return smooth_l1_element(d, beta); }).rowwise().sum() / c;
  loss.value = loss.per_token.sum() / n;
  loss.grad = diff.unaryExpr([beta](Scalar d) {
                    return std::abs(d) < beta ? d / beta : (d > 0 ? Scalar(1) : Scalar(-1));
                  }) /
              (n * c);
  return loss;
}

}  // namespace personmae
