#pragma once

// Nuclear-norm regularized completion by soft-impute:
//   minimize sum_Omega (Y - X)^2 + lambda ||X||_*.

#include "amc/linalg.hpp"
#include "amc/smg.hpp"
#include "amc/types.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace amc {

namespace detail {

inline Eigen::MatrixXd soft_threshold(const Eigen::MatrixXd& m, double tau, double& nuclear) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = (svd.singularValues().array() - tau).cwiseMax(0.0).matrix();
  nuclear = s.sum();
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace detail

/// U max(S - tau, 0) V^T.
inline Eigen::MatrixXd svd_soft_threshold(const Eigen::MatrixXd& m, double tau) {
  if (!(tau >= 0.0)) throw InvalidArgument("soft threshold must be non-negative");
  if (tau == 0.0 || m.size() == 0) return m;
  double unused = 0.0;
  return detail::soft_threshold(m, tau, unused);
}

inline double nuclear_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::BDCSVD<Eigen::MatrixXd>(m).singularValues().sum();
}

/// Number of singular values above 1e-8 times the largest.
inline int effective_rank(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0;
  const Eigen::VectorXd s = Eigen::BDCSVD<Eigen::MatrixXd>(m).singularValues();
  if (s.size() == 0 || !(s(0) > 0.0)) return 0;
  return static_cast<int>((s.array() > 1e-8 * s(0)).count());
}

struct CompletionResult {
  Eigen::MatrixXd x_hat;
  double lambda = 0.0;
  std::vector<double> objective_trace;
  int effective_rank = 0;
  int iterations = 0;
  bool converged = false;
};

struct CompletionOptions {
  int max_iters = 2000;
  double tol = 1e-9;
};

namespace detail {

inline double squared_residual(const ObservationSet& obs, const Eigen::MatrixXd& x) {
  double fit = 0.0;
  for (Eigen::Index n = 0; n < obs.size(); ++n) {
    const auto& e = obs.indices()[static_cast<std::size_t>(n)];
    const double r = obs.values()(n) - x(e.row, e.col);
    fit += r * r;
  }
  return fit;
}

}  // namespace detail

inline double completion_objective(const ObservationSet& obs, const Eigen::MatrixXd& x, double lambda) {
  return detail::squared_residual(obs, x) + lambda * nuclear_norm(x);
}

/// sqrt(m1 v m2) * 1.4826 * MAD of the observed values; falls back to the standard deviation and
/// then to 1e-6 when the spread is zero.
inline double default_lambda(const ObservationSet& obs) {
  if (obs.empty()) throw InvalidArgument("default lambda needs observations");
  std::vector<double> y(obs.values().data(), obs.values().data() + obs.size());
  const double med = quantile_type7(y, 0.5);
  std::vector<double> dev(y.size());
  std::transform(y.begin(), y.end(), dev.begin(), [&](double v) { return std::abs(v - med); });
  double scale = 1.4826 * quantile_type7(dev, 0.5);
  if (!(scale > 0.0)) {
    const double mean = obs.values().mean();
    scale = std::sqrt((obs.values().array() - mean).square().mean());
  }
  if (!(scale > 0.0)) scale = 1e-6;
  return std::sqrt(static_cast<double>(std::max(obs.rows(), obs.cols()))) * scale;
}

/// Soft-impute: fill unobserved cells with the current estimate, then apply the proximal step of
/// the nuclear-norm term. The threshold lambda/2 matches the unit weight on the squared loss, so
/// every step decreases the objective.
inline CompletionResult complete_nuclear_norm(const ObservationSet& obs, double lambda,
                                              const CompletionOptions& options = {}) {
  if (obs.empty()) throw InvalidArgument("nuclear-norm completion needs at least one observation");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be non-negative");
  if (options.max_iters < 1) throw InvalidArgument("max_iters must be positive");
  CompletionResult out;
  out.lambda = lambda;
  const auto mask = obs.mask();
  const Eigen::MatrixXd y = obs.scatter();
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(obs.rows(), obs.cols());
  double prev = completion_objective(obs, x, lambda);
  out.objective_trace.push_back(prev);
  Eigen::MatrixXd best = x;
  double best_obj = prev;
  for (int it = 1; it <= options.max_iters; ++it) {
    const Eigen::MatrixXd z = mask.select(y, x);
    double nuclear = 0.0;
    x = detail::soft_threshold(z, 0.5 * lambda, nuclear);
    const double obj = detail::squared_residual(obs, x) + lambda * nuclear;
    out.objective_trace.push_back(obj);
    out.iterations = it;
    if (obj <= best_obj) {
      best_obj = obj;
      best = x;
    }
    const double change = std::abs(prev - obj) / std::max(prev, std::numeric_limits<double>::min());
    prev = obj;
    if (change < options.tol) {
      out.converged = true;
      break;
    }
  }
  out.x_hat = std::move(best);
  out.effective_rank = effective_rank(out.x_hat);
  return out;
}

inline CompletionResult complete_nuclear_norm(const ObservationSet& obs, const CompletionOptions& options = {}) {
  return complete_nuclear_norm(obs, default_lambda(obs), options);
}

struct SubspaceEstimate {
  SubspaceBasis u;
  SubspaceBasis v;
  Eigen::VectorXd singular_values;
  bool padded = false;  ///< R exceeded the numerical rank; trailing directions were used
};

/// Top-R singular triplets of x_hat.
inline SubspaceEstimate estimate_subspaces(const Eigen::MatrixXd& x_hat, Eigen::Index rank) {
  const Eigen::Index k = std::min(x_hat.rows(), x_hat.cols());
  if (rank < 1 || rank > k) throw InvalidArgument("subspace rank must satisfy 1 <= R <= min(m1, m2)");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x_hat, Eigen::ComputeFullU | Eigen::ComputeFullV);
  SubspaceEstimate out{SubspaceBasis(svd.matrixU().leftCols(rank)), SubspaceBasis(svd.matrixV().leftCols(rank)),
                       svd.singularValues().head(rank), false};
  out.padded = rank > effective_rank(x_hat);
  return out;
}

}  // namespace amc
