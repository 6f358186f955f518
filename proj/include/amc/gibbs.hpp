#pragma once

// Fixed-rank Gibbs sampler for X = U D V^T with imputation of unobserved cells, rank posterior
// weights across fixed-rank chains, and posterior summaries.

#include "amc/linalg.hpp"
#include "amc/nuclear.hpp"
#include "amc/quadrant_law.hpp"
#include "amc/smg.hpp"
#include "amc/stiefel.hpp"
#include "amc/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <random>
#include <thread>
#include <vector>

namespace amc {

struct PriorSpec {
  double alpha_eta2 = 9.0;
  double beta_eta2 = 1e-3;
  double alpha_sigma2 = 9.0;
  double beta_sigma2 = 10.0;
  std::vector<double> rank_prior{0.2, 0.2, 0.2, 0.2, 0.2};  ///< pi_r for r = 1..r_max

  int max_rank() const noexcept { return static_cast<int>(rank_prior.size()); }

  void validate() const {
    if (!(alpha_eta2 > 0.0 && beta_eta2 > 0.0 && alpha_sigma2 > 0.0 && beta_sigma2 > 0.0)) {
      throw InvalidArgument("inverse-gamma shape and rate parameters must be positive");
    }
    if (rank_prior.empty()) throw InvalidArgument("rank prior is empty");
    double s = 0.0;
    for (double p : rank_prior) {
      if (!(p >= 0.0)) throw InvalidArgument("rank prior has a negative entry");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw InvalidArgument("rank prior must sum to 1");
  }

  double sigma2_mode() const { return beta_sigma2 / (alpha_sigma2 + 1.0); }
  double eta2_mode() const { return beta_eta2 / (alpha_eta2 + 1.0); }
};

struct GibbsState {
  Eigen::MatrixXd u;
  Eigen::MatrixXd v;
  Eigen::VectorXd d;
  double sigma2 = 1.0;
  double eta2 = 1.0;
  Eigen::MatrixXd y_full;

  Eigen::Index rank() const noexcept { return d.size(); }
  Eigen::MatrixXd x() const { return u * d.asDiagonal() * v.transpose(); }
};

struct GibbsDraw {
  Eigen::MatrixXd x;
  Eigen::MatrixXd u;
  Eigen::MatrixXd v;
  Eigen::VectorXd d;
  double sigma2 = 0.0;
  double eta2 = 0.0;
};

struct Chain {
  int rank = 0;
  std::vector<GibbsDraw> draws;
  double ql_scale = 1.0;
  double ql_acceptance = 0.0;
};

struct GibbsDraws {
  std::vector<Chain> chains;  ///< one per rank in the support, ascending
  Eigen::VectorXd rank_weights;

  Eigen::Index rows() const { return chains.front().draws.front().x.rows(); }
  Eigen::Index cols() const { return chains.front().draws.front().x.cols(); }
  int map_rank() const {
    Eigen::Index k = 0;
    rank_weights.maxCoeff(&k);
    return chains[static_cast<std::size_t>(k)].rank;
  }
};

/// Shape rule for the sigma2 full conditional. `half_rank` adds R/2 as the sampler is usually
/// stated; `half_rank_squared` adds R^2/2, the exact conditional under the QL normalizer.
enum class Sigma2Shape { half_rank, half_rank_squared };

struct GibbsOptions {
  int T = 10000;
  int burn_in = -1;  ///< negative selects T / 10
  int thin = 1;
  int mh_steps = 5;
  int mf_sweeps = 2;
  bool parallel = true;
  Sigma2Shape sigma2_shape = Sigma2Shape::half_rank;
  std::optional<double> lambda;  ///< regularization of the initializing completion

  int effective_burn_in() const { return burn_in < 0 ? T / 10 : burn_in; }
};

/// Shape of the inverse-gamma full conditional of sigma2 for rank R.
inline double sigma2_posterior_shape(const PriorSpec& priors, Eigen::Index r,
                                     Sigma2Shape rule = Sigma2Shape::half_rank) {
  const auto x = static_cast<double>(r);
  return priors.alpha_sigma2 + 0.5 * (rule == Sigma2Shape::half_rank ? x : x * x);
}

/// Shape of the inverse-gamma full conditional of eta2 on an m1 x m2 grid.
inline double eta2_posterior_shape(const PriorSpec& priors, Eigen::Index m1, Eigen::Index m2) {
  return priors.alpha_eta2 + 0.5 * static_cast<double>(m1 * m2);
}

template <class Rng>
double sample_inverse_gamma(double shape, double rate, Rng& rng) {
  std::gamma_distribution<double> g(shape, 1.0 / rate);
  return 1.0 / g(rng);
}

/// Connected components of the bipartite row/column graph of the observed cells: labels for rows
/// 0..m1-1 followed by columns.
inline std::vector<Eigen::Index> observation_components(const ObservationSet& obs) {
  const Eigen::Index m1 = obs.rows();
  std::vector<Eigen::Index> parent(static_cast<std::size_t>(m1 + obs.cols()));
  std::iota(parent.begin(), parent.end(), Eigen::Index{0});
  auto find = [&](Eigen::Index a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  };
  for (const auto& e : obs.indices()) parent[static_cast<std::size_t>(find(e.row))] = find(m1 + e.col);
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(parent.size()); ++k) parent[static_cast<std::size_t>(k)] = find(k);
  return parent;
}

/// One sweep: impute Y on the complement from the SMG conditional plus noise; redraw the core
/// U^T X V given the subspaces; then U, V from their matrix Fisher conditionals, D from its
/// quadrant law, sigma2 and eta2. At rank 1, finish with an independent sign flip per observation
/// component (u on its rows, v on its columns, Y on the cells it touches off the data).
template <class Rng>
GibbsState gibbs_step(GibbsState state, const ObservationSet& obs, const PriorSpec& priors, Rng& rng,
                      int mh_steps = 5, int mf_sweeps = 2, QuadrantLawTuning* tuning = nullptr,
                      Sigma2Shape sigma2_shape = Sigma2Shape::half_rank) {
  const Eigen::Index m1 = obs.rows();
  const Eigen::Index m2 = obs.cols();
  const Eigen::Index r = state.rank();
  if (state.u.rows() != m1 || state.v.rows() != m2 || state.u.cols() != r || state.v.cols() != r) {
    throw InvalidArgument("Gibbs state does not match the observation grid");
  }

  // Impute the unobserved part of Y.
  {
    const SMGModel model(SubspaceBasis(state.u), SubspaceBasis(state.v), state.sigma2);
    const ObservationSet noisy = obs.with_eta2(state.eta2);
    Eigen::MatrixXd draw = sample_conditional_matrix(model, noisy, rng);
    std::normal_distribution<double> z(0.0, 1.0);
    const double sd = std::sqrt(state.eta2);
    for (Eigen::Index j = 0; j < m2; ++j)
      for (Eigen::Index i = 0; i < m1; ++i) draw(i, j) += sd * z(rng);
    for (Eigen::Index n = 0; n < obs.size(); ++n) {
      const auto& e = obs.indices()[static_cast<std::size_t>(n)];
      draw(e.row, e.col) = obs.values()(n);
    }
    state.y_full = std::move(draw);
  }
  const Eigen::MatrixXd& y = state.y_full;

  // The imputation integrated out the frames within span(U), span(V) and D, so redraw them: the
  // core C = U^T X V is Gaussian given the subspaces, and its SVD gives the new frames and D.
  {
    const double shrink = state.sigma2 / (state.eta2 + state.sigma2);
    const Eigen::MatrixXd core = shrink * (state.u.transpose() * y * state.v) +
                                 std::sqrt(state.eta2 * shrink) * standard_normal_matrix(r, r, rng);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(core, Eigen::ComputeFullU | Eigen::ComputeFullV);
    state.u = state.u * svd.matrixU();
    state.v = state.v * svd.matrixV();
    state.d = svd.singularValues().cwiseMax(std::numeric_limits<double>::min());
  }

  state.u = matrix_fisher_sweeps(y * state.v * state.d.asDiagonal() / state.eta2, state.u, mf_sweeps, rng);
  state.v = matrix_fisher_sweeps(y.transpose() * state.u * state.d.asDiagonal() / state.eta2, state.v,
                                 mf_sweeps, rng);

  const double shrink = state.sigma2 / (state.eta2 + state.sigma2);
  const Eigen::VectorXd proj = (state.u.transpose() * y * state.v).diagonal();
  const Eigen::VectorXd mu = shrink * proj;
  const double delta2 = state.eta2 * shrink;
  state.d = sample_quadrant_law(mu, delta2, state.d, rng, mh_steps, tuning);

  state.sigma2 = sample_inverse_gamma(sigma2_posterior_shape(priors, r, sigma2_shape),
                                      priors.beta_sigma2 + 0.5 * state.d.squaredNorm(), rng);
  const double resid = (y - state.x()).squaredNorm();
  state.eta2 = sample_inverse_gamma(eta2_posterior_shape(priors, m1, m2), priors.beta_eta2 + 0.5 * resid, rng);

  if (r == 1) {
    const std::vector<Eigen::Index> label = observation_components(obs);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> flip(label.size(), 0.0);
    for (std::size_t k = 0; k < label.size(); ++k) {
      double& f = flip[static_cast<std::size_t>(label[k])];
      if (f == 0.0) f = coin(rng) ? -1.0 : 1.0;
    }
    Eigen::VectorXd s_row(m1);
    Eigen::VectorXd s_col(m2);
    for (Eigen::Index i = 0; i < m1; ++i) s_row(i) = flip[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])];
    for (Eigen::Index j = 0; j < m2; ++j)
      s_col(j) = flip[static_cast<std::size_t>(label[static_cast<std::size_t>(m1 + j)])];
    state.u.col(0).array() *= s_row.array();
    state.v.col(0).array() *= s_col.array();
    state.y_full = s_row.asDiagonal() * state.y_full * s_col.asDiagonal();
  }
  return state;
}

/// Starting state: rank-r truncated SVD of a completed matrix (nuclear-norm completion unless
/// `init` is given); without observations, a random frame and prior-mode variances.
template <class Rng>
GibbsState initial_state(const ObservationSet& obs, const PriorSpec& priors, int r, Rng& rng,
                         const std::optional<Eigen::MatrixXd>& init = std::nullopt,
                         std::optional<double> lambda = std::nullopt) {
  const Eigen::Index m1 = obs.rows();
  const Eigen::Index m2 = obs.cols();
  if (r < 1 || r >= std::min(m1, m2)) throw InvalidArgument("chain rank must satisfy 1 <= r < min(m1, m2)");
  GibbsState s;
  s.eta2 = priors.eta2_mode();
  if (obs.empty() && !init) {
    s.u = uniform_stiefel(m1, r, rng);
    s.v = uniform_stiefel(m2, r, rng);
    s.sigma2 = priors.sigma2_mode();
    std::normal_distribution<double> z(0.0, 1.0);
    s.d.resize(r);
    for (int k = 0; k < r; ++k) s.d(k) = std::abs(z(rng)) * std::sqrt(s.sigma2) + 1e-6;
    s.y_full = s.x();
    return s;
  }
  Eigen::MatrixXd x0;
  if (init) {
    if (init->rows() != m1 || init->cols() != m2) throw InvalidArgument("initial matrix has the wrong shape");
    x0 = *init;
  } else {
    x0 = (lambda ? complete_nuclear_norm(obs, *lambda) : complete_nuclear_norm(obs)).x_hat;
  }
  const SubspaceEstimate est = estimate_subspaces(x0, r);
  s.u = est.u.matrix();
  s.v = est.v.matrix();
  s.d = est.singular_values;
  const double top = s.d.size() > 0 ? std::max(s.d(0), 1.0) : 1.0;
  for (int k = 0; k < r; ++k) s.d(k) = std::max(s.d(k), 1e-3 * top * static_cast<double>(r - k));
  const double ss = s.d.squaredNorm() / static_cast<double>(r * r);
  s.sigma2 = ss > 0.0 ? ss : priors.sigma2_mode();
  s.y_full = x0;
  for (Eigen::Index n = 0; n < obs.size(); ++n) {
    const auto& e = obs.indices()[static_cast<std::size_t>(n)];
    s.y_full(e.row, e.col) = obs.values()(n);
  }
  return s;
}

/// burn_in discarded sweeps (with proposal-scale adaptation), then T retained draws every `thin`
/// sweeps.
template <class Rng>
Chain run_chain(const ObservationSet& obs, const PriorSpec& priors, int r, const GibbsOptions& options, Rng& rng,
                const std::optional<Eigen::MatrixXd>& init = std::nullopt) {
  if (options.T < 1) throw InvalidArgument("chain length T must be at least 1");
  if (options.thin < 1) throw InvalidArgument("thinning must be at least 1");
  priors.validate();
  Chain chain;
  chain.rank = r;
  GibbsState state = initial_state(obs, priors, r, rng, init, options.lambda);
  QuadrantLawTuning tuning;
  const int burn = options.effective_burn_in();
  for (int it = 0; it < burn; ++it) {
    state = gibbs_step(std::move(state), obs, priors, rng, options.mh_steps, options.mf_sweeps, &tuning,
                       options.sigma2_shape);
    tuning.adapt();
  }
  tuning.accepted = tuning.proposed = 0;
  chain.draws.reserve(static_cast<std::size_t>(options.T));
  for (int t = 0; t < options.T; ++t) {
    for (int k = 0; k < options.thin; ++k) {
      state = gibbs_step(std::move(state), obs, priors, rng, options.mh_steps, options.mf_sweeps, &tuning,
                       options.sigma2_shape);
    }
    chain.draws.push_back(GibbsDraw{state.x(), state.u, state.v, state.d, state.sigma2, state.eta2});
  }
  chain.ql_scale = tuning.scale;
  chain.ql_acceptance = tuning.acceptance();
  return chain;
}

// ---------------------------------------------------------------------------
// Rank posterior and summaries
// ---------------------------------------------------------------------------

/// log f(Y_Omega | Theta) + log p(Theta) for one draw: Gaussian likelihood on Omega, uniform
/// Stiefel densities, QL(0, sigma2) for D, inverse-gamma priors for the variances.
inline double draw_log_joint(const GibbsDraw& draw, const ObservationSet& obs, const PriorSpec& priors) {
  const int r = static_cast<int>(draw.d.size());
  double ll = 0.0;
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (Eigen::Index n = 0; n < obs.size(); ++n) {
    const auto& e = obs.indices()[static_cast<std::size_t>(n)];
    const double res = obs.values()(n) - draw.x(e.row, e.col);
    ll += -0.5 * (log2pi + std::log(draw.eta2)) - res * res / (2.0 * draw.eta2);
  }
  double lp = -log_stiefel_volume(static_cast<int>(draw.u.rows()), r) -
              log_stiefel_volume(static_cast<int>(draw.v.rows()), r);
  lp += quadrant_law_log_density(draw.d, draw.sigma2);
  lp += log_inverse_gamma_density(draw.sigma2, priors.alpha_sigma2, priors.beta_sigma2);
  lp += log_inverse_gamma_density(draw.eta2, priors.alpha_eta2, priors.beta_eta2);
  return ll + lp;
}

/// Normalize pi_r sum_t exp(log_joint[r](t)) over ranks with one global max shift.
inline Eigen::VectorXd combine_rank_log_weights(const std::vector<Eigen::VectorXd>& log_joint,
                                                const std::vector<double>& prior) {
  if (log_joint.empty() || log_joint.size() != prior.size()) throw InvalidArgument("rank weights need one prior per chain");
  Eigen::VectorXd logw(static_cast<Eigen::Index>(log_joint.size()));
  for (std::size_t c = 0; c < log_joint.size(); ++c) {
    for (Eigen::Index t = 0; t < log_joint[c].size(); ++t)
      if (std::isnan(log_joint[c](t))) throw NumericalError("rank posterior log-weight is NaN");
    logw(static_cast<Eigen::Index>(c)) = prior[c] > 0.0 ? std::log(prior[c]) + log_sum_exp(log_joint[c])
                                                        : -std::numeric_limits<double>::infinity();
  }
  const double top = logw.maxCoeff();
  if (!std::isfinite(top)) throw NumericalError("all rank posterior weights vanish");
  Eigen::VectorXd w = (logw.array() - top).exp().matrix();
  return w / w.sum();
}

/// pi_r^P proportional to pi_r sum_t f(Y_Omega | Theta_t) p(Theta_t), normalized in log space.
inline Eigen::VectorXd rank_posterior(const std::vector<Chain>& chains, const ObservationSet& obs,
                                      const PriorSpec& priors) {
  if (chains.empty()) throw InvalidArgument("rank posterior needs at least one chain");
  std::vector<Eigen::VectorXd> lj(chains.size());
  std::vector<double> prior(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& ch = chains[c];
    if (ch.draws.empty()) throw InvalidArgument("chain for rank " + std::to_string(ch.rank) + " is empty");
    if (ch.rank < 1 || ch.rank > priors.max_rank()) throw InvalidArgument("chain rank outside the rank prior");
    prior[c] = priors.rank_prior[static_cast<std::size_t>(ch.rank - 1)];
    lj[c].resize(static_cast<Eigen::Index>(ch.draws.size()));
    for (std::size_t t = 0; t < ch.draws.size(); ++t) lj[c](static_cast<Eigen::Index>(t)) = draw_log_joint(ch.draws[t], obs, priors);
  }
  return combine_rank_log_weights(lj, prior);
}

/// Chains for every rank in `ranks` with independent seed streams, then their rank weights.
inline GibbsDraws run_gibbs(const ObservationSet& obs, const PriorSpec& priors, const std::vector<int>& ranks,
                            const GibbsOptions& options, std::uint64_t seed,
                            const std::optional<Eigen::MatrixXd>& init = std::nullopt) {
  if (ranks.empty()) throw InvalidArgument("rank support is empty");
  priors.validate();
  GibbsDraws out;
  out.chains.resize(ranks.size());
  std::vector<std::exception_ptr> errors(ranks.size());
  auto work = [&](std::size_t k) {
    try {
      std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(ranks[k])));
      out.chains[k] = run_chain(obs, priors, ranks[k], options, rng, init);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  if (options.parallel && ranks.size() > 1) {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < ranks.size(); ++k) pool.emplace_back(work, k);
    for (auto& t : pool) t.join();
  } else {
    for (std::size_t k = 0; k < ranks.size(); ++k) work(k);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  out.rank_weights = rank_posterior(out.chains, obs, priors);
  return out;
}

/// sum_r (pi_r / T_r) sum_t X_t^(r).
inline Eigen::MatrixXd posterior_mean(const GibbsDraws& draws) {
  if (draws.chains.empty()) throw InvalidArgument("posterior mean of an empty draw set");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(draws.rows(), draws.cols());
  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    const double w = draws.rank_weights(static_cast<Eigen::Index>(c));
    if (w == 0.0) continue;
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(draws.rows(), draws.cols());
    for (const auto& d : draws.chains[c].draws) s += d.x;
    m += (w / static_cast<double>(draws.chains[c].draws.size())) * s;
  }
  return m;
}

struct EntryInterval {
  Entry entry;
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Mixed-rank samples of each target: rank from pi^P, then a uniformly chosen draw of that chain.
/// Returns the sample mean and the equal-tailed `level` interval (type-7 quantiles).
template <class Rng>
std::vector<EntryInterval> entry_uncertainty(const GibbsDraws& draws, const std::vector<Entry>& targets,
                                             double level, Rng& rng, int samples = 4000) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("interval level must lie in (0, 1)");
  if (samples < 1) throw InvalidArgument("need at least one sample");
  validate_entries(targets, draws.rows(), draws.cols());
  std::discrete_distribution<std::size_t> pick_rank(draws.rank_weights.data(),
                                                    draws.rank_weights.data() + draws.rank_weights.size());
  std::vector<std::pair<std::size_t, std::size_t>> picks(static_cast<std::size_t>(samples));
  for (auto& p : picks) {
    p.first = pick_rank(rng);
    std::uniform_int_distribution<std::size_t> pick_draw(0, draws.chains[p.first].draws.size() - 1);
    p.second = pick_draw(rng);
  }
  const double tail = 0.5 * (1.0 - level);
  std::vector<EntryInterval> out;
  out.reserve(targets.size());
  std::vector<double> vals(picks.size());
  for (const auto& t : targets) {
    for (std::size_t s = 0; s < picks.size(); ++s) vals[s] = draws.chains[picks[s].first].draws[picks[s].second].x(t.row, t.col);
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    out.push_back(EntryInterval{t, mean, quantile_type7(vals, tail), quantile_type7(vals, 1.0 - tail)});
  }
  return out;
}

}  // namespace amc
