#pragma once

#include "personmae/types.hpp"

#include <cmath>
#include <string>

namespace personmae {

/// Fixed 2D sine-cosine embedding of real-valued (row, col) coordinates.
///
/// The first D/2 channels encode the row, the last D/2 the column. Within each
/// half, channel pair k holds (sin(c * w_k), cos(c * w_k)) with
/// w_k = 10000^(-4k / D), k = 0 .. D/4 - 1. Fractional coordinates are fine,
/// which is what lets shifted regions land between grid cells.
template <typename Scalar, typename Derived>
Matrix<Scalar> sincos_embed_2d(const Eigen::MatrixBase<Derived>& coords, int dim) {
  if (dim <= 0 || dim % 4 != 0) {
    throw std::invalid_argument("sin-cos embedding width must be a positive multiple of 4, got " + std::to_string(dim));
  }
  if (coords.cols() != 2) {
    throw std::invalid_argument("coordinates must have two columns");
  }
  const int quarter = dim / 4;
  Matrix<Scalar> out(coords.rows(), dim);
  for (int k = 0; k < quarter; ++k) {
    const double omega = std::pow(10000.0, -4.0 * k / dim);
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
      for (int axis = 0; axis < 2; ++axis) {
        const double angle = static_cast<double>(coords(i, axis)) * omega;
        const int base = axis * (dim / 2) + 2 * k;
        out(i, base) = static_cast<Scalar>(std::sin(angle));
        out(i, base + 1) = static_cast<Scalar>(std::cos(angle));
      }
    }
  }
  return out;
}

}  // namespace personmae
