#pragma once

// Observation entropy, sequential gains, balanced starting designs, screening and greedy batches.

#include "amc/coherence.hpp"
#include "amc/linalg.hpp"
#include "amc/smg.hpp"
#include "amc/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace amc {

/// Frozen subspace snapshot(s) plus the factor of R_N(Omega) + gamma2 I for each.
/// A single component is the empirical-Bayes case; several weighted components carry posterior
/// draws, whose gains are averaged with their weights.
class DesignState {
 public:
  struct Component {
    SMGModel model;
    double weight = 1.0;
    double gamma2 = 0.0;
    SpdFactor factor;
    Eigen::MatrixXd a;  ///< rows of U at the design cells
    Eigen::MatrixXd b;  ///< rows of V at the design cells
  };

  DesignState(const SMGModel& model, const ObservationSet& obs) : obs_(obs), cells_(obs.indices()) {
    add_component(model, 1.0, obs.eta2() / model.sigma2());
  }

  /// Weighted components, each with its own noise ratio gamma2.
  DesignState(const std::vector<SMGModel>& models, const std::vector<double>& weights,
              const std::vector<double>& gamma2, const ObservationSet& obs)
      : obs_(obs), cells_(obs.indices()) {
    if (models.empty() || models.size() != weights.size() || models.size() != gamma2.size()) {
      throw InvalidArgument("design components, weights and noise ratios must align");
    }
    for (std::size_t c = 0; c < models.size(); ++c) add_component(models[c], weights[c], gamma2[c]);
  }

  const ObservationSet& obs() const noexcept { return obs_; }
  /// Observed cells followed by cells added through extend().
  const std::vector<Entry>& cells() const noexcept { return cells_; }
  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(cells_.size()); }
  const std::vector<Component>& components() const noexcept { return components_; }
  const SMGModel& model() const noexcept { return components_.front().model; }
  double gamma2() const noexcept { return components_.front().gamma2; }
  const SpdFactor& factor() const noexcept { return components_.front().factor; }
  Eigen::Index rows() const noexcept { return obs_.rows(); }
  Eigen::Index cols() const noexcept { return obs_.cols(); }

  bool contains(const Entry& e) const {
    return std::find(cells_.begin(), cells_.end(), e) != cells_.end();
  }

  /// Weighted mu_i mu_j - ||L^{-1} nu_ij||^2 for every candidate, one triangular solve per
  /// component.
  Eigen::VectorXd gains(const std::vector<Entry>& candidates) const {
    Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(candidates.size()));
    for (const auto& c : components_) {
      const auto [ac, bc] = c.model.factors(candidates);
      const Eigen::VectorXd prior =
          ac.rowwise().squaredNorm().cwiseProduct(bc.rowwise().squaredNorm());
      if (cells_.empty()) {
        total += c.weight * prior;
        continue;
      }
      const Eigen::MatrixXd cross = (c.a * ac.transpose()).cwiseProduct(c.b * bc.transpose());
      const Eigen::MatrixXd w = c.factor.half_solve(cross);
      total += c.weight * (prior - w.colwise().squaredNorm().transpose());
    }
    return total;
  }

  /// Add a cell to the design by bordering every component factor.
  void extend(const Entry& e) {
    if (contains(e)) throw DomainError("entry " + to_string(e) + " is already in the design");
    const std::vector<Entry> one{e};
    for (auto& c : components_) {
      const auto [ae, be] = c.model.factors(one);
      const Eigen::VectorXd border = (c.a * ae.transpose()).cwiseProduct(c.b * be.transpose());
      const double corner = ae.squaredNorm() * be.squaredNorm() + c.gamma2;
      c.factor.extend(border, corner);
      c.a.conservativeResize(c.a.rows() + 1, Eigen::NoChange);
      c.b.conservativeResize(c.b.rows() + 1, Eigen::NoChange);
      c.a.bottomRows(1) = ae;
      c.b.bottomRows(1) = be;
    }
    cells_.push_back(e);
  }

 private:
  void add_component(const SMGModel& model, double weight, double gamma2) {
    if (model.rows() != obs_.rows() || model.cols() != obs_.cols()) {
      throw InvalidArgument("model grid does not match the observations");
    }
    if (!(weight >= 0.0) || !(gamma2 >= 0.0)) throw InvalidArgument("invalid design component");
    Component c{model, weight, gamma2, {}, {}, {}};
    std::tie(c.a, c.b) = model.factors(cells_);
    c.factor = cells_.empty() ? factor_spd(Eigen::MatrixXd(0, 0))
                              : *FactorCache::global().get(model, cells_, gamma2);
    components_.push_back(std::move(c));
  }

  ObservationSet obs_;
  std::vector<Entry> cells_;
  std::vector<Component> components_;
};

/// log det(sigma2 R_N + eta2 I) = N log sigma2 + log det(R_N + gamma2 I).
inline double log_observation_entropy(const DesignState& state, double sigma2, double eta2) {
  if (!(sigma2 > 0.0) || !(eta2 >= 0.0)) throw InvalidArgument("invalid variance parameters");
  const double n = static_cast<double>(state.size());
  const double gamma2 = eta2 / sigma2;
  if (gamma2 == state.gamma2()) return n * std::log(sigma2) + state.factor().log_det();
  Eigen::MatrixXd k = build_covariance_block(state.model(), state.cells());
  k.diagonal().array() += gamma2;
  return n * std::log(sigma2) +
         factor_spd(k, gamma2 > 0.0 ? JitterPolicy::escalate : JitterPolicy::strict).log_det();
}

inline double sequential_gain(const DesignState& state, const Entry& candidate) {
  if (state.contains(candidate)) throw DomainError("candidate " + to_string(candidate) + " is observed");
  return state.gains({candidate})(0);
}

// ---------------------------------------------------------------------------
// Balanced designs
// ---------------------------------------------------------------------------

struct BalancedDesign {
  std::vector<Entry> indices;
};

/// '1'-cells of floor(m1/m2) stacked random m2 x m2 Latin squares; leftover rows take distinct
/// random columns.
template <class Rng>
BalancedDesign balanced_initial_design(Eigen::Index m1, Eigen::Index m2, Rng& rng) {
  if (m2 < 1) throw InvalidArgument("design needs at least one column");
  if (m2 > m1) throw InvalidArgument("balanced design requires m1 >= m2; transpose the problem");
  BalancedDesign d;
  d.indices.reserve(static_cast<std::size_t>(m1));
  const Eigen::Index stacks = m1 / m2;
  std::vector<Eigen::Index> rperm(static_cast<std::size_t>(m2));
  std::vector<Eigen::Index> cperm(static_cast<std::size_t>(m2));
  for (Eigen::Index s = 0; s < stacks; ++s) {
    std::iota(rperm.begin(), rperm.end(), 0);
    std::iota(cperm.begin(), cperm.end(), 0);
    std::shuffle(rperm.begin(), rperm.end(), rng);
    std::shuffle(cperm.begin(), cperm.end(), rng);
    // Cyclic square L[i][j] = (i + j) mod m2 + 1 has its '1' at j = (m2 - i) mod m2.
    for (Eigen::Index i = 0; i < m2; ++i) {
      const Eigen::Index j = (m2 - i) % m2;
      d.indices.push_back(Entry{s * m2 + rperm[static_cast<std::size_t>(i)], cperm[static_cast<std::size_t>(j)]});
    }
  }
  const Eigen::Index rest = m1 - stacks * m2;
  if (rest > 0) {
    std::iota(cperm.begin(), cperm.end(), 0);
    std::shuffle(cperm.begin(), cperm.end(), rng);
    for (Eigen::Index i = 0; i < rest; ++i) d.indices.push_back(Entry{stacks * m2 + i, cperm[static_cast<std::size_t>(i)]});
  }
  std::sort(d.indices.begin(), d.indices.end());
  return d;
}

struct BalanceBound {
  double value = 0.0;
  bool vacuous = false;  ///< N < 2, or the bound is not positive
};

/// min_n [sigma2 mu_{i_n} mu_{j_n} + eta2 - sigma2 (N-1)/2 (max_{n'} nu^2(U) + max_{n'} nu^2(V))].
inline BalanceBound balance_bound(const SMGModel& model, const std::vector<Entry>& indices,
                                  double sigma2, double eta2) {
  validate_entries(indices, model.rows(), model.cols());
  if (indices.empty()) throw InvalidArgument("balance bound needs at least one index");
  const auto [a, b] = model.factors(indices);
  const Eigen::MatrixXd gu = a * a.transpose();
  const Eigen::MatrixXd gv = b * b.transpose();
  const auto n = static_cast<Eigen::Index>(indices.size());
  BalanceBound out;
  if (n < 2) {
    out.value = sigma2 * gu(0, 0) * gv(0, 0) + eta2;
    out.vacuous = true;
    return out;
  }
  out.value = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) {
    double mu = 0.0;
    double mv = 0.0;
    for (Eigen::Index l = 0; l < n; ++l) {
      if (l == k) continue;
      mu = std::max(mu, gu(k, l) * gu(k, l));
      mv = std::max(mv, gv(k, l) * gv(k, l));
    }
    const double term = sigma2 * gu(k, k) * gv(k, k) + eta2 - 0.5 * sigma2 * static_cast<double>(n - 1) * (mu + mv);
    out.value = std::min(out.value, term);
  }
  out.vacuous = !(out.value > 0.0);
  return out;
}

// ---------------------------------------------------------------------------
// Screening and batch selection
// ---------------------------------------------------------------------------

/// Keep candidates whose row and column coherences both reach the (1 - keep_fraction) quantile,
/// at most ceil(keep_fraction * count) of them, preferring larger mu_i mu_j then lexicographic
/// order. Output keeps the input order.
inline std::vector<Entry> screen_candidates(const CoherenceProfile& profile,
                                            const std::vector<Entry>& unobserved, double keep_fraction) {
  if (unobserved.empty()) throw DomainError("no unobserved entries left; the matrix is fully observed");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw InvalidArgument("keep_fraction must lie in (0, 1]");
  }
  if (keep_fraction == 1.0) return unobserved;
  const std::vector<double> rows(profile.row_coherences.data(),
                                 profile.row_coherences.data() + profile.row_coherences.size());
  const std::vector<double> cols(profile.col_coherences.data(),
                                 profile.col_coherences.data() + profile.col_coherences.size());
  const double qr = quantile_type7(rows, 1.0 - keep_fraction);
  const double qc = quantile_type7(cols, 1.0 - keep_fraction);
  auto score = [&](const Entry& e) { return profile.row_coherences(e.row) * profile.col_coherences(e.col); };

  std::vector<std::size_t> pass;
  for (std::size_t k = 0; k < unobserved.size(); ++k) {
    const auto& e = unobserved[k];
    if (profile.row_coherences(e.row) >= qr && profile.col_coherences(e.col) >= qc) pass.push_back(k);
  }
  if (pass.empty()) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < unobserved.size(); ++k) {
      const double s = score(unobserved[k]);
      const double sb = score(unobserved[best]);
      if (s > sb || (s == sb && unobserved[k] < unobserved[best])) best = k;
    }
    return {unobserved[best]};
  }
  const auto cap = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(unobserved.size())));
  if (pass.size() > cap) {
    std::stable_sort(pass.begin(), pass.end(), [&](std::size_t x, std::size_t y) {
      const double sx = score(unobserved[x]);
      const double sy = score(unobserved[y]);
      if (sx != sy) return sx > sy;
      return unobserved[x] < unobserved[y];
    });
    pass.resize(cap);
    std::sort(pass.begin(), pass.end());
  }
  std::vector<Entry> out;
  out.reserve(pass.size());
  for (auto k : pass) out.push_back(unobserved[k]);
  return out;
}

struct BatchSelection {
  std::vector<Entry> indices;
  std::vector<double> gains;  ///< score of each pick at the time it was chosen
  bool short_batch = false;
};

/// Greedy batch: take the best-scoring candidate (ties to the smallest (i, j)), border the design
/// factor with it, rescore, repeat. The state is advanced in place.
inline BatchSelection select_batch(DesignState& state, std::vector<Entry> candidates, std::size_t batch_size) {
  if (batch_size < 1) throw InvalidArgument("batch size must be at least 1");
  if (candidates.empty()) throw InvalidArgument("no candidates to select from");
  for (const auto& c : candidates)
    if (state.contains(c)) throw DomainError("candidate " + to_string(c) + " is already observed");
  BatchSelection out;
  if (batch_size >= candidates.size()) {
    out.short_batch = batch_size > candidates.size();
    batch_size = candidates.size();
  }
  for (std::size_t b = 0; b < batch_size; ++b) {
    const Eigen::VectorXd g = state.gains(candidates);
    std::size_t best = 0;
    for (std::size_t k = 1; k < candidates.size(); ++k) {
      const double gk = g(static_cast<Eigen::Index>(k));
      const double gb = g(static_cast<Eigen::Index>(best));
      if (gk > gb || (gk == gb && candidates[k] < candidates[best])) best = k;
    }
    const Entry pick = candidates[best];
    out.indices.push_back(pick);
    out.gains.push_back(g(static_cast<Eigen::Index>(best)));
    candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(best));
    state.extend(pick);
  }
  return out;
}

inline BatchSelection select_batch(const DesignState& state, const std::vector<Entry>& candidates,
                                   std::size_t batch_size) {
  DesignState copy = state;
  return select_batch(copy, candidates, batch_size);
}

}  // namespace amc
