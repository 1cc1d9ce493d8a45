#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "moshead/error.hpp"

namespace moshead::numkit {

/// Dense row-major matrix of doubles. Small by construction: the largest
/// matrices in this codebase are last-layer Hessians and SWAG deviation
/// buffers (a few thousand entries).
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool all_finite() const noexcept;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Counter-based RNG: the k-th draw is a pure function of (seed, k), so
/// streams reproduce byte-identically across platforms and can be split by
/// copying the state. A single state must not be advanced from two threads.
///
/// next_u64 is the splitmix64 output function applied to
/// seed + (position+1) * golden gamma.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t position = 0;
};

std::uint64_t next_u64(RngState& rng);

/// Uniform in [0, 1), 53-bit resolution.
double next_uniform(RngState& rng);

/// Uniform integer in [0, bound) without modulo bias (Lemire reduction).
std::uint64_t next_bounded(RngState& rng, std::uint64_t bound);

/// One N(0,1) draw via Box-Muller; consumes exactly two uniforms.
double next_normal(RngState& rng);

/// n i.i.d. N(0,1) draws. n == 0 raises an empty-request error.
std::vector<double> standard_normal(RngState& rng, std::size_t n);

/// Lower-triangular L with L*L^T = a. Raises a decomposition error naming
/// the failing leading minor when a is not positive-definite.
DenseMatrix cholesky(const DenseMatrix& a);

/// Forward/back substitution with a lower-triangular factor.
std::vector<double> cholesky_solve(const DenseMatrix& l, std::span<const double> b);

/// Solves (a + damping*I) x = b for symmetric a via Cholesky.
/// Raises a shape error when a is not square/symmetric (tolerance 1e-8) or
/// b has the wrong length, and a singularity error naming the smallest pivot
/// when the damped matrix is numerically singular.
std::vector<double> solve_damped(const DenseMatrix& a, std::span<const double> b,
                                 double damping);

}  // namespace moshead::numkit
