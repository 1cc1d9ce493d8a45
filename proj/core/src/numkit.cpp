#include "moshead/numkit.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace moshead::numkit {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

}  // namespace

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool DenseMatrix::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::uint64_t next_u64(RngState& rng) {
  rng.position += 1;
  return mix64(rng.seed + rng.position * kGamma);
}

double next_uniform(RngState& rng) {
  return static_cast<double>(next_u64(rng) >> 11) * 0x1.0p-53;
}

std::uint64_t next_bounded(RngState& rng, std::uint64_t bound) {
  if (bound == 0) throw Error::internal("next_bounded: bound must be positive");
  using u128 = unsigned __int128;
  std::uint64_t x = next_u64(rng);
  u128 m = static_cast<u128>(x) * static_cast<u128>(bound);
  auto lo = static_cast<std::uint64_t>(m);
  if (lo < bound) {
    std::uint64_t threshold = (0ULL - bound) % bound;
    while (lo < threshold) {
      x = next_u64(rng);
      m = static_cast<u128>(x) * static_cast<u128>(bound);
      lo = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double next_normal(RngState& rng) {
  // 1-u1 keeps the log argument in (0, 1].
  double u1 = 1.0 - next_uniform(rng);
  double u2 = next_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> standard_normal(RngState& rng, std::size_t n) {
  if (n == 0) throw Error::data("standard_normal: empty request (n = 0)");
  std::vector<double> out(n);
  for (auto& v : out) v = next_normal(rng);
  return out;
}

DenseMatrix cholesky(const DenseMatrix& a) {
  if (a.rows() != a.cols())
    throw Error::data("cholesky: matrix is not square");
  const std::size_t n = a.rows();
  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) {
      std::ostringstream msg;
      msg << "cholesky: matrix is not positive-definite, leading minor of order "
          << (j + 1) << " fails (pivot " << diag << ")";
      throw Error::numeric(msg.str());
    }
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double sum = a(i, j);
      for (std::size_t k = 0; k < j; ++k) sum -= l(i, k) * l(j, k);
      l(i, j) = sum / l(j, j);
    }
  }
  return l;
}

std::vector<double> cholesky_solve(const DenseMatrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  if (b.size() != n) throw Error::data("cholesky_solve: rhs length mismatch");
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = b[i];
    for (std::size_t k = 0; k < i; ++k) sum -= l(i, k) * y[k];
    y[i] = sum / l(i, i);
  }
  std::vector<double> x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double sum = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) sum -= l(k, ii) * x[k];
    x[ii] = sum / l(ii, ii);
  }
  return x;
}

std::vector<double> solve_damped(const DenseMatrix& a, std::span<const double> b,
                                 double damping) {
  if (a.rows() != a.cols())
    throw Error::data("solve_damped: matrix is not square");
  const std::size_t n = a.rows();
  if (b.size() != n) throw Error::data("solve_damped: rhs length mismatch");
  if (damping < 0.0) throw Error::data("solve_damped: negative damping");
  constexpr double kSymTol = 1e-8;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > kSymTol)
        throw Error::data("solve_damped: matrix is not symmetric within 1e-8");
    }
  }
  DenseMatrix damped = a;
  for (std::size_t i = 0; i < n; ++i) damped(i, i) += damping;
  DenseMatrix l;
  try {
    l = cholesky(damped);
  } catch (const Error&) {
    // Recompute the smallest pivot for the diagnostic.
    double smallest = damped(0, 0);
    DenseMatrix probe(n, n);
    for (std::size_t j = 0; j < n; ++j) {
      double diag = damped(j, j);
      for (std::size_t k = 0; k < j; ++k) diag -= probe(j, k) * probe(j, k);
      smallest = std::min(smallest, diag);
      if (!(diag > 0.0)) break;
      probe(j, j) = std::sqrt(diag);
      for (std::size_t i = j + 1; i < n; ++i) {
        double sum = damped(i, j);
        for (std::size_t k = 0; k < j; ++k) sum -= probe(i, k) * probe(j, k);
        probe(i, j) = sum / probe(j, j);
      }
    }
    std::ostringstream msg;
    msg << "solve_damped: damped matrix is numerically singular (smallest pivot "
        << smallest << ")";
    throw Error::numeric(msg.str());
  }
  return cholesky_solve(l, b);
}

}  // namespace moshead::numkit
