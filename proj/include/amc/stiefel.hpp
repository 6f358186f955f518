#pragma once

// von Mises-Fisher draws on spheres and matrix Fisher draws on Stiefel manifolds.

#include "amc/linalg.hpp"
#include "amc/smg.hpp"
#include "amc/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace amc {

namespace detail {

template <class Rng>
double beta_draw(double a, double b, Rng& rng) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

/// Unit vector uniform on the sphere of span(I - Q Q^T) orthogonal to `mu`; Q has orthonormal
/// columns (possibly none) and mu is a unit vector in that span or empty.
template <class Rng>
Eigen::VectorXd uniform_tangent(const Eigen::MatrixXd& q, const Eigen::VectorXd* mu, Rng& rng) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    Eigen::VectorXd g = standard_normal_matrix(q.rows(), 1, rng);
    if (q.cols() > 0) g -= q * (q.transpose() * g);
    if (mu != nullptr) g -= mu->dot(g) * (*mu);
    const double n = g.norm();
    if (n > 1e-12) return g / n;
  }
  throw NumericalError("could not draw a direction in the requested subspace");
}

}  // namespace detail

/// Draw w with density proportional to exp(a^T w) on the unit sphere of the subspace orthogonal
/// to the columns of q (dimension p = m - q.cols()). `a` must lie in that subspace.
template <class Rng>
Eigen::VectorXd sample_vmf_in_complement(const Eigen::VectorXd& a, const Eigen::MatrixXd& q, Rng& rng) {
  const Eigen::Index p = a.size() - q.cols();
  if (p < 1) throw InvalidArgument("von Mises-Fisher subspace is empty");
  const double kappa = a.norm();
  if (p == 1) {
    // The sphere is {+n, -n}.
    Eigen::VectorXd n = kappa > 0.0 ? Eigen::VectorXd(a / kappa) : detail::uniform_tangent(q, nullptr, rng);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double p_plus = 1.0 / (1.0 + std::exp(-2.0 * kappa));
    return u01(rng) < p_plus ? n : Eigen::VectorXd(-n);
  }
  if (!(kappa > 0.0)) return detail::uniform_tangent(q, nullptr, rng);
  if (!std::isfinite(kappa)) throw NumericalError("non-finite von Mises-Fisher concentration");

  const Eigen::VectorXd mu = a / kappa;
  const double pm1 = static_cast<double>(p - 1);
  // Wood's rejection sampler for the component W = mu^T w.
  const double b = pm1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + pm1 * pm1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + pm1 * std::log1p(-x0 * x0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double w = 0.0;
  double one_minus_w = 1.0;
  for (;;) {
    const double z = detail::beta_draw(0.5 * pm1, 0.5 * pm1, rng);
    const double den = 1.0 - (1.0 - b) * z;
    w = (1.0 - (1.0 + b) * z) / den;
    one_minus_w = 2.0 * b * z / den;
    const double u = u01(rng);
    if (u <= 0.0) continue;
    if (kappa * w + pm1 * std::log1p(-x0 * w) - c >= std::log(u)) break;
  }
  const Eigen::VectorXd v = detail::uniform_tangent(q, &mu, rng);
  const double s = std::sqrt(std::max(0.0, one_minus_w * (1.0 + w)));
  return w * mu + s * v;
}

/// von Mises-Fisher draw on S^{m-1} with natural parameter a (mean direction a/|a|, concentration |a|).
template <class Rng>
Eigen::VectorXd sample_vmf(const Eigen::VectorXd& a, Rng& rng) {
  return sample_vmf_in_complement(a, Eigen::MatrixXd(a.size(), 0), rng);
}

/// Column-wise Gibbs sweeps for MF(F), density proportional to etr(F^T W), started from `w`.
/// Column k is redrawn from its full conditional, a von Mises-Fisher law on the unit sphere of the
/// orthogonal complement of the other columns.
template <class Rng>
Eigen::MatrixXd matrix_fisher_sweeps(const Eigen::MatrixXd& f, Eigen::MatrixXd w, int sweeps, Rng& rng) {
  const Eigen::Index m = f.rows();
  const Eigen::Index r = f.cols();
  if (w.rows() != m || w.cols() != r) throw InvalidArgument("starting frame has the wrong shape");
  if (!f.allFinite()) throw InvalidArgument("matrix Fisher concentration is not finite");
  Eigen::MatrixXd others(m, r - 1);
  for (int s = 0; s < sweeps; ++s) {
    for (Eigen::Index k = 0; k < r; ++k) {
      for (Eigen::Index j = 0, c = 0; j < r; ++j)
        if (j != k) others.col(c++) = w.col(j);
      Eigen::VectorXd a = f.col(k);
      if (r > 1) a -= others * (others.transpose() * a);
      Eigen::VectorXd col = sample_vmf_in_complement(a, others, rng);
      if (r > 1) col -= others * (others.transpose() * col);
      w.col(k) = col / col.norm();
    }
  }
  return w;
}

/// One MF(m, R, F) draw: `sweeps` column sweeps started from the polar factor of F + G, G a
/// uniform frame, so strong concentrations start near the mode. With F = 0 the output is exactly
/// uniform.
template <class Rng>
SubspaceBasis sample_matrix_fisher(Eigen::Index m, Eigen::Index r, const Eigen::MatrixXd& f, Rng& rng,
                                   int sweeps = 2) {
  if (r < 1 || m < r) throw InvalidArgument("matrix Fisher draw requires 1 <= R <= m");
  if (f.rows() != m || f.cols() != r) throw InvalidArgument("concentration matrix must be m x R");
  if (!f.allFinite()) throw InvalidArgument("matrix Fisher concentration is not finite");
  Eigen::MatrixXd w = uniform_stiefel(m, r, rng);
  if (f.squaredNorm() > 0.0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(f + w, Eigen::ComputeThinU | Eigen::ComputeThinV);
    w = svd.matrixU() * svd.matrixV().transpose();
  }
  return SubspaceBasis(matrix_fisher_sweeps(f, std::move(w), sweeps, rng));
}

}  // namespace amc
