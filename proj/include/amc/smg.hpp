#pragma once

// Singular matrix-variate Gaussian (SMG) model: X = P_U Z P_V with Z having i.i.d. N(0, sigma2)
// entries. vec(X) is a degenerate Gaussian with covariance sigma2 (P_V kron P_U), so every
// conditional of observed/unobserved cells is available in closed form.

#include "amc/linalg.hpp"
#include "amc/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace amc {

/// Gram deviation above which a basis is rejected.
inline constexpr double kBasisTolerance = 1e-6;

/// m x R matrix with orthonormal columns, 1 <= R <= m.
class SubspaceBasis {
 public:
  SubspaceBasis() = default;

  explicit SubspaceBasis(Eigen::MatrixXd columns) : columns_(std::move(columns)) {
    const Eigen::Index m = columns_.rows();
    const Eigen::Index r = columns_.cols();
    if (r < 1 || r > m) {
      throw InvalidBasis("basis must have 1 <= R <= m columns (got " + std::to_string(r) +
                         " columns in R^" + std::to_string(m) + ")");
    }
    if (!columns_.allFinite()) throw InvalidBasis("basis has non-finite entries");
    const double dev =
        (columns_.transpose() * columns_ - Eigen::MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff();
    if (dev > kBasisTolerance) {
      throw InvalidBasis("basis columns are not orthonormal (Gram deviation " +
                         std::to_string(dev) + ")");
    }
  }

  const Eigen::MatrixXd& matrix() const noexcept { return columns_; }
  Eigen::Index dim() const noexcept { return columns_.rows(); }
  Eigen::Index rank() const noexcept { return columns_.cols(); }

  /// Rows of the basis at the given row indices (one output row per index).
  Eigen::MatrixXd gather_rows(std::span<const Eigen::Index> rows) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), rank());
    for (std::size_t n = 0; n < rows.size(); ++n) out.row(static_cast<Eigen::Index>(n)) = columns_.row(rows[n]);
    return out;
  }

 private:
  Eigen::MatrixXd columns_;
};

/// Orthogonal projector onto an R-dimensional subspace.
class ProjectionMatrix {
 public:
  ProjectionMatrix() = default;

  /// Validates symmetry, idempotence and trace = rank.
  static ProjectionMatrix from_matrix(Eigen::MatrixXd p) {
    if (p.rows() != p.cols() || p.rows() == 0) throw InvalidArgument("projector must be square");
    if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
      throw InvalidArgument("projector is not symmetric");
    }
    if ((p * p - p).cwiseAbs().maxCoeff() > 1e-8) throw InvalidArgument("projector is not idempotent");
    const double tr = p.trace();
    const double r = std::round(tr);
    if (std::abs(tr - r) > 1e-8 || r < 1.0) throw InvalidArgument("projector trace is not a positive integer");
    ProjectionMatrix out;
    out.entries_ = std::move(p);
    out.rank_ = static_cast<Eigen::Index>(r);
    return out;
  }

  const Eigen::MatrixXd& matrix() const noexcept { return entries_; }
  Eigen::Index dim() const noexcept { return entries_.rows(); }
  Eigen::Index rank() const noexcept { return rank_; }

  /// An orthonormal basis of the range (top-R eigenvectors).
  SubspaceBasis basis() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(entries_);
    Eigen::MatrixXd cols = es.eigenvectors().rightCols(rank_);
    return SubspaceBasis(std::move(cols));
  }

 private:
  friend ProjectionMatrix projection_from_basis(const SubspaceBasis& basis);
  Eigen::MatrixXd entries_;
  Eigen::Index rank_ = 0;
};

inline ProjectionMatrix projection_from_basis(const SubspaceBasis& basis) {
  ProjectionMatrix p;
  p.entries_ = basis.matrix() * basis.matrix().transpose();
  p.rank_ = basis.rank();
  return p;
}

/// Validating overload for raw column matrices; throws InvalidBasis.
inline ProjectionMatrix projection_from_basis(const Eigen::MatrixXd& columns) {
  return projection_from_basis(SubspaceBasis(columns));
}

/// SMG(P_U, P_V, sigma2, R) prior. Bases are kept so covariance blocks cost O(N^2 R).
class SMGModel {
 public:
  SMGModel() = default;

  SMGModel(SubspaceBasis u, SubspaceBasis v, double sigma2)
      : u_(std::move(u)), v_(std::move(v)), sigma2_(sigma2) {
    if (u_.rank() != v_.rank()) throw InvalidArgument("row and column subspaces differ in rank");
    if (u_.rank() >= std::min(u_.dim(), v_.dim())) {
      throw InvalidArgument("SMG rank must satisfy R < min(m1, m2)");
    }
    if (!(sigma2_ > 0.0) || !std::isfinite(sigma2_)) throw InvalidArgument("sigma2 must be positive");
  }

  static SMGModel from_projections(const ProjectionMatrix& pu, const ProjectionMatrix& pv,
                                   double sigma2) {
    return SMGModel(pu.basis(), pv.basis(), sigma2);
  }

  /// Model with Haar-uniform row and column subspaces.
  template <class Rng>
  static SMGModel random(Eigen::Index m1, Eigen::Index m2, Eigen::Index rank, double sigma2,
                         Rng& rng) {
    return SMGModel(SubspaceBasis(uniform_stiefel(m1, rank, rng)),
                    SubspaceBasis(uniform_stiefel(m2, rank, rng)), sigma2);
  }

  Eigen::Index rows() const noexcept { return u_.dim(); }
  Eigen::Index cols() const noexcept { return v_.dim(); }
  Eigen::Index rank() const noexcept { return u_.rank(); }
  double sigma2() const noexcept { return sigma2_; }
  const SubspaceBasis& u() const noexcept { return u_; }
  const SubspaceBasis& v() const noexcept { return v_; }
  ProjectionMatrix pu() const { return projection_from_basis(u_); }
  ProjectionMatrix pv() const { return projection_from_basis(v_); }

  SMGModel with_sigma2(double sigma2) const { return SMGModel(u_, v_, sigma2); }

  /// Row factor A (N x R) and column factor B (N x R) with A(n,:) = U(i_n,:), B(n,:) = V(j_n,:).
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> factors(std::span<const Entry> cells) const {
    const auto n = static_cast<Eigen::Index>(cells.size());
    Eigen::MatrixXd a(n, rank());
    Eigen::MatrixXd b(n, rank());
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& e = cells[static_cast<std::size_t>(k)];
      if (e.row < 0 || e.row >= rows() || e.col < 0 || e.col >= cols()) {
        throw IndexError("entry " + to_string(e) + " outside model grid");
      }
      a.row(k) = u_.matrix().row(e.row);
      b.row(k) = v_.matrix().row(e.col);
    }
    return {std::move(a), std::move(b)};
  }

 private:
  SubspaceBasis u_;
  SubspaceBasis v_;
  double sigma2_ = 1.0;
};

// ---------------------------------------------------------------------------
// Sampling and density
// ---------------------------------------------------------------------------

/// Residual ||P_U X P_V - X||_max; zero when X lies in the SMG support.
inline double support_residual(const Eigen::MatrixXd& x, const SMGModel& model) {
  const auto& u = model.u().matrix();
  const auto& v = model.v().matrix();
  const Eigen::MatrixXd proj = u * (u.transpose() * x * v) * v.transpose();
  return (proj - x).cwiseAbs().maxCoeff();
}

/// Draw X = P_U Z P_V. Uses U^T Z V, whose R x R entries are again i.i.d. N(0, sigma2).
template <class Rng>
Eigen::MatrixXd sample_smg(const SMGModel& model, Rng& rng) {
  const auto& u = model.u().matrix();
  const auto& v = model.v().matrix();
  const Eigen::MatrixXd z = std::sqrt(model.sigma2()) * standard_normal_matrix(model.rows(), model.cols(), rng);
  return u * (u.transpose() * z * v) * v.transpose();
}

inline double smg_log_density(const Eigen::MatrixXd& x, const SMGModel& model) {
  if (x.rows() != model.rows() || x.cols() != model.cols()) {
    throw DomainError("matrix shape does not match the model");
  }
  const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
  if (support_residual(x, model) > 1e-6 * scale) {
    throw DomainError("matrix does not lie in the SMG support P_U X P_V = X");
  }
  const auto& u = model.u().matrix();
  const auto& v = model.v().matrix();
  const double r = static_cast<double>(model.rank());
  const Eigen::MatrixXd xpv = x * v * v.transpose();
  const Eigen::MatrixXd pux = u * (u.transpose() * x);
  const double tr = (xpv.transpose() * pux).trace();
  return -0.5 * r * r * std::log(2.0 * std::numbers::pi * model.sigma2()) - tr / (2.0 * model.sigma2());
}

/// Y_ij = X_ij + eps, eps ~ N(0, eta2) i.i.d.
template <class Rng>
ObservationSet observe_entries(const Eigen::MatrixXd& x, std::vector<Entry> indices, double eta2,
                               Rng& rng) {
  validate_entries(indices, x.rows(), x.cols());
  if (!(eta2 >= 0.0)) throw InvalidArgument("noise variance must be non-negative");
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sd = std::sqrt(eta2);
  Eigen::VectorXd y(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const double eps = noise(rng);
    y(static_cast<Eigen::Index>(n)) = x(indices[n].row, indices[n].col) + sd * eps;
  }
  return ObservationSet(x.rows(), x.cols(), std::move(indices), std::move(y), eta2);
}

// ---------------------------------------------------------------------------
// Covariance blocks of P_V kron P_U
// ---------------------------------------------------------------------------

/// Block (n, n') = nu_{i_n, k_n'}(U) nu_{j_n, l_n'}(V) between two cell lists.
inline Eigen::MatrixXd cross_covariance_block(const SMGModel& model, std::span<const Entry> a,
                                              std::span<const Entry> b) {
  const auto [ua, va] = model.factors(a);
  const auto [ub, vb] = model.factors(b);
  return (ua * ub.transpose()).cwiseProduct(va * vb.transpose());
}

/// R_N(Omega) = (P_V kron P_U)_Omega, built from basis rows in O(N^2 R).
inline Eigen::MatrixXd build_covariance_block(const SMGModel& model, std::span<const Entry> cells) {
  const auto [ua, va] = model.factors(cells);
  Eigen::MatrixXd k = (ua * ua.transpose()).cwiseProduct(va * va.transpose());
  return 0.5 * (k + k.transpose());
}

inline Eigen::MatrixXd build_covariance_block(const SMGModel& model, const std::vector<Entry>& cells) {
  return build_covariance_block(model, std::span<const Entry>(cells));
}

// ---------------------------------------------------------------------------
// Conditional posterior of unobserved cells
// ---------------------------------------------------------------------------

struct ConditionalPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  double gamma2 = 0.0;
};

/// Factor of R_N + gamma2 I. With gamma2 > 0 the system is positive definite in exact arithmetic
/// and roundoff failures are absorbed by jitter; with gamma2 == 0 singularity is reported.
inline SpdFactor factor_observation_kernel(const SMGModel& model, std::span<const Entry> cells,
                                           double gamma2) {
  Eigen::MatrixXd k = build_covariance_block(model, cells);
  k.diagonal().array() += gamma2;
  return factor_spd(k, gamma2 > 0.0 ? JitterPolicy::escalate : JitterPolicy::strict);
}

inline ConditionalPosterior conditional_posterior(const SMGModel& model, const ObservationSet& obs,
                                                  const std::vector<Entry>& targets) {
  if (obs.rows() != model.rows() || obs.cols() != model.cols()) {
    throw InvalidArgument("observation grid does not match the model");
  }
  validate_entries(targets, model.rows(), model.cols());
  {
    EntrySet observed(obs.indices().begin(), obs.indices().end());
    for (const auto& t : targets)
      if (observed.contains(t)) throw DomainError("target " + to_string(t) + " is observed");
  }
  ConditionalPosterior out;
  out.gamma2 = obs.eta2() / model.sigma2();
  const Eigen::MatrixXd c = build_covariance_block(model, targets);
  if (obs.empty()) {
    out.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(targets.size()));
    out.covariance = model.sigma2() * c;
    return out;
  }
  const SpdFactor f = factor_observation_kernel(model, obs.indices(), out.gamma2);
  const Eigen::MatrixXd b = cross_covariance_block(model, obs.indices(), targets);
  const Eigen::MatrixXd w = f.half_solve(b);
  const Eigen::VectorXd z = f.half_solve(obs.values());
  out.mean = w.transpose() * z;
  Eigen::MatrixXd cov = model.sigma2() * (c - w.transpose() * w);
  out.covariance = 0.5 * (cov + cov.transpose());
  return out;
}

/// Exact draw of the full matrix X | Y_Omega by pathwise conditioning: a prior draw is corrected
/// by the kriging update of its simulated observation residual. Cost O(N^3 + m1 m2 R).
template <class Rng>
Eigen::MatrixXd sample_conditional_matrix(const SMGModel& model, const ObservationSet& obs, Rng& rng) {
  const auto& u = model.u().matrix();
  const auto& v = model.v().matrix();
  const Eigen::Index r = model.rank();
  Eigen::MatrixXd core = std::sqrt(model.sigma2()) * standard_normal_matrix(r, r, rng);
  if (obs.empty()) return u * core * v.transpose();

  const double gamma2 = obs.eta2() / model.sigma2();
  const SpdFactor f = factor_observation_kernel(model, obs.indices(), gamma2);
  const auto [a, b] = model.factors(obs.indices());
  // Prior draw at observed cells plus simulated noise.
  const Eigen::VectorXd prior_at_obs = ((a * core).cwiseProduct(b)).rowwise().sum();
  std::normal_distribution<double> z(0.0, 1.0);
  const double sd = std::sqrt(obs.eta2());
  Eigen::VectorXd resid(obs.size());
  for (Eigen::Index n = 0; n < obs.size(); ++n) resid(n) = obs.values()(n) - prior_at_obs(n) - sd * z(rng);
  const Eigen::VectorXd w = f.solve(resid);
  // sum_n w_n u_{i_n} v_{j_n}^T collapses the cross-covariance product to an R x R core.
  core += a.transpose() * w.asDiagonal() * b;
  return u * core * v.transpose();
}

}  // namespace amc
