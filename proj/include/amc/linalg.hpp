#pragma once

#include "amc/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace amc {

// ---------------------------------------------------------------------------
// Symmetric positive-definite factorization with jitter escalation.
// ---------------------------------------------------------------------------

enum class JitterPolicy {
  escalate,  ///< retry with 1e-10, 1e-8, 1e-6 added to the diagonal
  strict,    ///< numerically singular input is an error
};

/// Pivot-ratio threshold below which a Cholesky factor is treated as singular.
inline constexpr double kSingularPivotRatio = 1e-13;

inline constexpr std::array<double, 3> kJitterLadder{1e-10, 1e-8, 1e-6};

/// Lower Cholesky factor L with L L^T = A + jitter * I.
class SpdFactor {
 public:
  SpdFactor() = default;
  SpdFactor(Eigen::MatrixXd lower, double jitter) : lower_(std::move(lower)), jitter_(jitter) {}

  Eigen::Index size() const noexcept { return lower_.rows(); }
  const Eigen::MatrixXd& lower() const noexcept { return lower_; }
  double jitter() const noexcept { return jitter_; }

  /// L^{-1} b
  template <class Derived>
  Eigen::MatrixXd half_solve(const Eigen::MatrixBase<Derived>& b) const {
    if (size() == 0) return Eigen::MatrixXd(0, b.cols());
    return lower_.triangularView<Eigen::Lower>().solve(b);
  }

  /// A^{-1} b
  template <class Derived>
  Eigen::MatrixXd solve(const Eigen::MatrixBase<Derived>& b) const {
    if (size() == 0) return Eigen::MatrixXd(0, b.cols());
    Eigen::MatrixXd y = lower_.triangularView<Eigen::Lower>().solve(b);
    return lower_.transpose().triangularView<Eigen::Upper>().solve(y);
  }

  double log_det() const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < size(); ++i) s += std::log(lower_(i, i));
    return 2.0 * s;
  }

  Eigen::MatrixXd reconstruct() const { return lower_ * lower_.transpose(); }

  /// Border the factor with one new row/column: [[A, b], [b^T, c]].
  void extend(const Eigen::VectorXd& border, double corner) {
    const Eigen::Index n = size();
    if (border.size() != n) throw InvalidArgument("border length must match factor size");
    Eigen::VectorXd l = half_solve(border);
    const double d2 = corner + jitter_ - l.squaredNorm();
    if (!(d2 > 0.0) || !std::isfinite(d2)) {
      throw NumericalError("rank-one factor extension lost positive definiteness");
    }
    Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(n + 1, n + 1);
    grown.topLeftCorner(n, n) = lower_;
    grown.block(n, 0, 1, n) = l.transpose();
    grown(n, n) = std::sqrt(d2);
    lower_ = std::move(grown);
  }

 private:
  Eigen::MatrixXd lower_;
  double jitter_ = 0.0;
};

inline double condition_estimate(const Eigen::MatrixXd& a) {
  if (a.rows() == 0) return 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

namespace detail {

inline bool try_llt(const Eigen::MatrixXd& a, Eigen::MatrixXd& lower) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  const auto diag = lower.diagonal();
  if (!diag.allFinite()) return false;
  const double lo = diag.minCoeff();
  const double hi = diag.maxCoeff();
  if (!(lo > 0.0)) return false;
  return (lo * lo) >= kSingularPivotRatio * (hi * hi);
}

}  // namespace detail

inline SpdFactor factor_spd(const Eigen::MatrixXd& a, JitterPolicy policy = JitterPolicy::escalate) {
  if (a.rows() != a.cols()) throw InvalidArgument("factor_spd requires a square matrix");
  if (a.rows() == 0) return SpdFactor(Eigen::MatrixXd(0, 0), 0.0);
  if (!a.allFinite()) throw NumericalError("non-finite entries in covariance matrix");
  Eigen::MatrixXd lower;
  if (detail::try_llt(a, lower)) return SpdFactor(std::move(lower), 0.0);
  if (policy == JitterPolicy::escalate) {
    for (double jitter : kJitterLadder) {
      Eigen::MatrixXd shifted = a;
      shifted.diagonal().array() += jitter;
      if (detail::try_llt(shifted, lower)) return SpdFactor(std::move(lower), jitter);
    }
  }
  throw IllConditioned("covariance matrix is numerically singular", condition_estimate(a));
}

// ---------------------------------------------------------------------------
// Small numerical helpers
// ---------------------------------------------------------------------------

inline double log_sum_exp(const Eigen::VectorXd& x) {
  if (x.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

/// Sample quantile, type-7 (linear interpolation between order statistics, R's default).
inline double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile probability outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// log of the multivariate gamma function Gamma_p(a).
inline double log_multivariate_gamma(int p, double a) {
  double s = 0.25 * p * (p - 1) * std::log(std::numbers::pi);
  for (int j = 1; j <= p; ++j) s += std::lgamma(a - 0.5 * (j - 1));
  return s;
}

/// log volume of the Stiefel manifold of m x r orthonormal frames.
inline double log_stiefel_volume(int m, int r) {
  return r * std::log(2.0) + 0.5 * m * r * std::log(std::numbers::pi) -
         log_multivariate_gamma(r, 0.5 * m);
}

inline double log_inverse_gamma_density(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - rate / x;
}

template <class Rng>
Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = z(rng);
  return m;
}

/// Uniform (Haar) draw of an m x r orthonormal frame: QR of a Gaussian matrix with sign fix.
template <class Rng>
Eigen::MatrixXd uniform_stiefel(Eigen::Index m, Eigen::Index r, Rng& rng) {
  Eigen::MatrixXd g = standard_normal_matrix(m, r, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, r);
  const Eigen::MatrixXd rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < r; ++k)
    if (rr(k, k) < 0.0) q.col(k) = -q.col(k);
  return q;
}

/// Orthonormal basis of the orthogonal complement of span(a) in R^m (a has orthonormal columns).
inline Eigen::MatrixXd orthogonal_complement(const Eigen::MatrixXd& a) {
  const Eigen::Index m = a.rows();
  const Eigen::Index k = a.cols();
  if (k == 0) return Eigen::MatrixXd::Identity(m, m);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  return q.rightCols(m - k);
}

/// SplitMix64 finalizer; derives independent stream seeds from (base, tag).
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Content hashing (FNV-1a over raw bytes)
// ---------------------------------------------------------------------------

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 1099511628211ULL;
    }
  }
  template <class T>
  void value(const T& v) {
    bytes(&v, sizeof(T));
  }
  void matrix(const Eigen::MatrixXd& m) {
    value(m.rows());
    value(m.cols());
    bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  void string(const std::string& s) { bytes(s.data(), s.size()); }
  std::uint64_t digest() const noexcept { return h_; }

 private:
  std::uint64_t h_ = 1469598103934665603ULL;
};

}  // namespace amc
