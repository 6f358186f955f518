#pragma once

// Coherence, cross-coherence and entrywise (conditional) variances under the SMG prior.

#include "amc/linalg.hpp"
#include "amc/smg.hpp"
#include "amc/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

namespace amc {

struct CoherenceProfile {
  Eigen::VectorXd row_coherences;
  Eigen::VectorXd col_coherences;
  double max_row = 0.0;
  double max_col = 0.0;
};

namespace detail {

inline void check_index(Eigen::Index i, Eigen::Index m) {
  if (i < 0 || i >= m) {
    throw IndexError("index " + std::to_string(i + 1) + " outside 1.." + std::to_string(m));
  }
}

}  // namespace detail

/// mu_i(U) = ||P_U e_i||^2, the squared norm of row i of the basis.
inline double coherence(const SubspaceBasis& basis, Eigen::Index i) {
  detail::check_index(i, basis.dim());
  return basis.matrix().row(i).squaredNorm();
}

inline double coherence(const ProjectionMatrix& p, Eigen::Index i) {
  detail::check_index(i, p.dim());
  return p.matrix()(i, i);
}

/// nu_{i,i2}(U) = e_{i2}^T P_U e_i.
inline double cross_coherence(const SubspaceBasis& basis, Eigen::Index i, Eigen::Index i2) {
  detail::check_index(i, basis.dim());
  detail::check_index(i2, basis.dim());
  return basis.matrix().row(i).dot(basis.matrix().row(i2));
}

inline double cross_coherence(const ProjectionMatrix& p, Eigen::Index i, Eigen::Index i2) {
  detail::check_index(i, p.dim());
  detail::check_index(i2, p.dim());
  return p.matrix()(i2, i);
}

inline Eigen::VectorXd row_coherences(const SubspaceBasis& basis) {
  return basis.matrix().rowwise().squaredNorm();
}

inline CoherenceProfile coherence_profile(const SubspaceBasis& u, const SubspaceBasis& v) {
  CoherenceProfile p;
  p.row_coherences = row_coherences(u);
  p.col_coherences = row_coherences(v);
  p.max_row = p.row_coherences.maxCoeff();
  p.max_col = p.col_coherences.maxCoeff();
  return p;
}

inline CoherenceProfile coherence_profile(const SMGModel& model) {
  return coherence_profile(model.u(), model.v());
}

/// Cross-coherence vector nu_{i,j} = nu_i(U) o nu_j(V) of a target against an index list.
struct CrossCoherenceVector {
  Eigen::VectorXd values;
  Entry target;
};

inline CrossCoherenceVector cross_coherence_vector(const SMGModel& model,
                                                   const std::vector<Entry>& cells,
                                                   const Entry& target) {
  const auto [a, b] = model.factors(cells);
  detail::check_index(target.row, model.rows());
  detail::check_index(target.col, model.cols());
  CrossCoherenceVector out;
  out.target = target;
  out.values = (a * model.u().matrix().row(target.row).transpose())
                   .cwiseProduct(b * model.v().matrix().row(target.col).transpose());
  return out;
}

/// Var(X_ij) = sigma2 mu_i(U) mu_j(V).
inline double prior_variance(const SMGModel& model, Eigen::Index i, Eigen::Index j) {
  return model.sigma2() * coherence(model.u(), i) * coherence(model.v(), j);
}

inline double prior_variance(const SMGModel& model, const Entry& e) {
  return prior_variance(model, e.row, e.col);
}

// ---------------------------------------------------------------------------
// Factorization cache keyed by snapshot content
// ---------------------------------------------------------------------------

/// Shares one factor of R_N + gamma2 I per (bases, cells, gamma2) snapshot. Lookups hash the
/// content and confirm by full comparison, so stale hits are impossible.
class FactorCache {
 public:
  static FactorCache& global() {
    static FactorCache cache;
    return cache;
  }

  std::shared_ptr<const SpdFactor> get(const SMGModel& model, const std::vector<Entry>& cells,
                                       double gamma2) {
    Fnv1a h;
    h.matrix(model.u().matrix());
    h.matrix(model.v().matrix());
    h.value(gamma2);
    for (const auto& e : cells) {
      h.value(e.row);
      h.value(e.col);
    }
    const std::uint64_t key = h.digest();
    {
      std::lock_guard lock(mutex_);
      if (auto it = slots_.find(key); it != slots_.end()) {
        for (const auto& s : it->second) {
          if (s.gamma2 == gamma2 && s.cells == cells && s.u == model.u().matrix() &&
              s.v == model.v().matrix()) {
            ++hits_;
            return s.factor;
          }
        }
      }
      ++misses_;
    }
    auto factor = std::make_shared<const SpdFactor>(factor_observation_kernel(model, cells, gamma2));
    std::lock_guard lock(mutex_);
    if (count_ >= capacity_) {
      slots_.clear();
      count_ = 0;
    }
    slots_[key].push_back(Slot{model.u().matrix(), model.v().matrix(), cells, gamma2, factor});
    ++count_;
    return factor;
  }

  void clear() {
    std::lock_guard lock(mutex_);
    slots_.clear();
    count_ = 0;
  }

  std::size_t hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
  }
  std::size_t misses() const {
    std::lock_guard lock(mutex_);
    return misses_;
  }

 private:
  struct Slot {
    Eigen::MatrixXd u;
    Eigen::MatrixXd v;
    std::vector<Entry> cells;
    double gamma2;
    std::shared_ptr<const SpdFactor> factor;
  };

  mutable std::mutex mutex_;
  std::unordered_map<std::uint64_t, std::vector<Slot>> slots_;
  std::size_t count_ = 0;
  std::size_t capacity_ = 256;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// Latent covariances of X given Y_Omega through one cached factorization.
class ConditionalKernel {
 public:
  ConditionalKernel(SMGModel model, const ObservationSet& obs)
      : model_(std::move(model)), cells_(obs.indices()), gamma2_(obs.eta2() / model_.sigma2()) {
    if (obs.rows() != model_.rows() || obs.cols() != model_.cols()) {
      throw InvalidArgument("observation grid does not match the model");
    }
    std::tie(a_, b_) = model_.factors(cells_);
    factor_ = FactorCache::global().get(model_, cells_, gamma2_);
  }

  const SMGModel& model() const noexcept { return model_; }
  double gamma2() const noexcept { return gamma2_; }
  const SpdFactor& factor() const noexcept { return *factor_; }

  Eigen::VectorXd cross(const Entry& t) const {
    detail::check_index(t.row, model_.rows());
    detail::check_index(t.col, model_.cols());
    return (a_ * model_.u().matrix().row(t.row).transpose())
        .cwiseProduct(b_ * model_.v().matrix().row(t.col).transpose());
  }

  double prior_covariance(const Entry& s, const Entry& t) const {
    return model_.sigma2() * cross_coherence(model_.u(), s.row, t.row) *
           cross_coherence(model_.v(), s.col, t.col);
  }

  double covariance(const Entry& s, const Entry& t) const {
    if (cells_.empty()) return prior_covariance(s, t);
    const Eigen::VectorXd ws = factor_->half_solve(cross(s));
    const Eigen::VectorXd wt = (s == t) ? ws : Eigen::VectorXd(factor_->half_solve(cross(t)));
    return prior_covariance(s, t) - model_.sigma2() * ws.dot(wt);
  }

  double variance(const Entry& t) const { return covariance(t, t); }

 private:
  SMGModel model_;
  std::vector<Entry> cells_;
  double gamma2_;
  Eigen::MatrixXd a_;
  Eigen::MatrixXd b_;
  std::shared_ptr<const SpdFactor> factor_;
};

namespace detail {

inline void require_unobserved(const ObservationSet& obs, const Entry& e) {
  if (obs.contains(e)) throw DomainError("entry " + to_string(e) + " is already observed");
}

}  // namespace detail

inline double conditional_variance(const SMGModel& model, const ObservationSet& obs, const Entry& t) {
  detail::require_unobserved(obs, t);
  return ConditionalKernel(model, obs).variance(t);
}

inline double conditional_covariance(const SMGModel& model, const ObservationSet& obs,
                                     const Entry& s, const Entry& t) {
  detail::require_unobserved(obs, s);
  detail::require_unobserved(obs, t);
  return ConditionalKernel(model, obs).covariance(s, t);
}

/// Var(X_t | Y_Omega, Y_new) from the one-step Schur identity, without refactoring.
inline double variance_after_update(const SMGModel& model, const ObservationSet& obs,
                                    const Entry& added, const Entry& target) {
  detail::require_unobserved(obs, added);
  const ConditionalKernel k(model, obs);
  const double v_target = k.variance(target);
  const double v_added = k.variance(added);
  const double c = k.covariance(target, added);
  const double denom = v_added + obs.eta2();
  if (!(denom > 0.0)) return v_target;
  return v_target - c * c / denom;
}

struct ErrorDecayBound {
  double value = 0.0;
  int degenerate_steps = 0;  ///< steps whose correlation was set to 0 by the zero-variance guard
};

/// Conditional variances below this are treated as zero in the correlation factors.
inline constexpr double kZeroVariance = 1e-14;

/// sigma2 mu_k mu_l prod_n (1 - Corr_n^2 / (1 + gamma2)), each Corr_n conditional on the first
/// n-1 cells of the sequence.
inline ErrorDecayBound error_decay_lower_bound(const SMGModel& model,
                                               const std::vector<Entry>& sequence,
                                               const Entry& target, std::size_t n_steps,
                                               double eta2) {
  if (n_steps > sequence.size()) throw InvalidArgument("n_steps exceeds the sampling sequence");
  std::vector<Entry> prefix(sequence.begin(), sequence.begin() + static_cast<std::ptrdiff_t>(n_steps));
  validate_entries(prefix, model.rows(), model.cols());
  for (const auto& e : prefix)
    if (e == target) throw DomainError("target " + to_string(target) + " lies in the sequence");
  if (!(eta2 >= 0.0)) throw InvalidArgument("noise variance must be non-negative");

  const double gamma2 = eta2 / model.sigma2();
  const auto [a, b] = model.factors(prefix);
  const auto& u = model.u().matrix();
  const auto& v = model.v().matrix();
  // Rows of a, b already absorbed into the factor.
  Eigen::MatrixXd ai(0, a.cols());
  Eigen::MatrixXd bi(0, b.cols());
  auto cross = [&](const Entry& t) {
    return Eigen::VectorXd((ai * u.row(t.row).transpose()).cwiseProduct(bi * v.row(t.col).transpose()));
  };

  ErrorDecayBound out;
  out.value = prior_variance(model, target);
  SpdFactor f = factor_spd(Eigen::MatrixXd(0, 0));
  for (std::size_t n = 0; n < n_steps; ++n) {
    const Entry& s = prefix[n];
    const Eigen::VectorXd cs = cross(s);
    const Eigen::VectorXd ls = f.half_solve(cs);
    const Eigen::VectorXd lt = f.half_solve(cross(target));
    const double var_s = prior_variance(model, s) - model.sigma2() * ls.squaredNorm();
    const double var_t = prior_variance(model, target) - model.sigma2() * lt.squaredNorm();
    const double cov = model.sigma2() * (cross_coherence(model.u(), s.row, target.row) *
                                             cross_coherence(model.v(), s.col, target.col) -
                                         ls.dot(lt));
    double corr2 = 0.0;
    if (var_s < kZeroVariance || var_t < kZeroVariance) {
      ++out.degenerate_steps;
    } else {
      corr2 = std::min(1.0, cov * cov / (var_s * var_t));
    }
    out.value *= 1.0 - corr2 / (1.0 + gamma2);
    // A noiseless cell with no conditional variance is already determined and adds nothing.
    if (gamma2 == 0.0 && var_s < kZeroVariance) continue;
    f.extend(cs, coherence(model.u(), s.row) * coherence(model.v(), s.col) + gamma2);
    const auto k = ai.rows();
    ai.conservativeResize(k + 1, Eigen::NoChange);
    bi.conservativeResize(k + 1, Eigen::NoChange);
    ai.row(k) = a.row(static_cast<Eigen::Index>(n));
    bi.row(k) = b.row(static_cast<Eigen::Index>(n));
  }
  out.value = std::max(0.0, out.value);
  return out;
}

}  // namespace amc
