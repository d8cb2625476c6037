#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace personmae {

// Token-major dense storage: one row per token / patch / sample.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// (row, col) pairs, one per token.
template <typename Scalar>
using Coords = Eigen::Matrix<Scalar, Eigen::Dynamic, 2, Eigen::RowMajor>;

using MatrixXd = Matrix<double>;
using CoordsXd = Coords<double>;

using Rng = std::mt19937_64;

// Invalid arguments use std::invalid_argument; unrecoverable state and I/O
// problems use std::runtime_error. Non-finite numerics get their own type so
// the CLI can map them to a distinct exit code.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Deterministic per-sample generator derived from (seed, epoch, index).
inline Rng make_rng(std::uint64_t seed, std::uint64_t epoch = 0, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace personmae
