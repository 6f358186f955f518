#pragma once

// Maximum-entropy sequential sampling: balanced start, then rounds of fit / screen / greedy batch.

#include "amc/coherence.hpp"
#include "amc/entropy_design.hpp"
#include "amc/gibbs.hpp"
#include "amc/nuclear.hpp"
#include "amc/smg.hpp"
#include "amc/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <optional>
#include <random>
#include <vector>

namespace amc {

enum class MaxEntMode { fully_bayes, empirical_bayes };

struct MaxEntConfig {
  Eigen::Index m1 = 0;
  Eigen::Index m2 = 0;
  Eigen::Index n_ini = 0;  ///< 0 selects m1 v m2
  Eigen::Index n_seq = 0;
  std::size_t batch_size = 1;
  double eta2 = 1e-4;  ///< noise variance used for design scoring
  double keep_fraction = 0.0;  ///< 0 selects 0.25 above 10^4 cells, 1 otherwise
  PriorSpec priors;
  GibbsOptions chain{.T = 200, .burn_in = 100};
  int design_draws = 20;  ///< thinned posterior draws per rank used for scoring
  std::optional<double> lambda;

  double screening_fraction() const {
    if (keep_fraction > 0.0) return keep_fraction;
    return m1 * m2 > 10000 ? 0.25 : 1.0;
  }
};

/// Observations gathered so far, in query order.
struct SamplingTrace {
  std::vector<Entry> indices;
  std::vector<double> values;
};

using EntryOracle = std::function<double(const Entry&)>;
using BatchCallback = std::function<void(const SamplingTrace&, std::size_t batch_begin)>;

inline ObservationSet trace_observations(const SamplingTrace& trace, Eigen::Index m1, Eigen::Index m2, double eta2) {
  return ObservationSet(m1, m2, trace.indices,
                        Eigen::Map<const Eigen::VectorXd>(trace.values.data(), static_cast<Eigen::Index>(trace.values.size())),
                        eta2);
}

/// Balanced design on either orientation; extra entries beyond m1 v m2 come uniformly from the rest.
template <class Rng>
std::vector<Entry> initial_design(Eigen::Index m1, Eigen::Index m2, Eigen::Index n_ini, Rng& rng) {
  std::vector<Entry> cells;
  if (m1 >= m2) {
    cells = balanced_initial_design(m1, m2, rng).indices;
  } else {
    for (const auto& e : balanced_initial_design(m2, m1, rng).indices) cells.push_back(Entry{e.col, e.row});
    std::sort(cells.begin(), cells.end());
  }
  const auto n = static_cast<std::size_t>(n_ini);
  if (n < cells.size()) throw InvalidArgument("n_ini must be at least m1 v m2 for a balanced start");
  if (n > cells.size()) {
    EntrySet used(cells.begin(), cells.end());
    std::vector<Entry> rest;
    for (Eigen::Index i = 0; i < m1; ++i)
      for (Eigen::Index j = 0; j < m2; ++j)
        if (!used.contains(Entry{i, j})) rest.push_back(Entry{i, j});
    std::shuffle(rest.begin(), rest.end(), rng);
    cells.insert(cells.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n - cells.size()));
  }
  return cells;
}

/// Empirical-Bayes snapshot: subspaces of a nuclear-norm completion at its effective rank
/// (clamped to [1, min(m1, m2) - 1]) with sigma2 = ||X_R||_F^2 / R^2.
inline SMGModel empirical_bayes_model(const ObservationSet& obs, std::optional<double> lambda,
                                      std::optional<int> rank = std::nullopt) {
  const CompletionResult fit = lambda ? complete_nuclear_norm(obs, *lambda) : complete_nuclear_norm(obs);
  const int cap = static_cast<int>(std::min(obs.rows(), obs.cols())) - 1;
  const int r = std::clamp(rank.value_or(fit.effective_rank), 1, cap);
  const SubspaceEstimate est = estimate_subspaces(fit.x_hat, r);
  double sigma2 = est.singular_values.squaredNorm() / static_cast<double>(r * r);
  if (!(sigma2 > 0.0)) sigma2 = 1.0;
  return SMGModel(est.u, est.v, sigma2);
}

/// Weighted posterior snapshots: design_draws evenly spaced draws per rank, weight pi_r / count.
inline DesignState fully_bayes_state(const GibbsDraws& draws, const ObservationSet& obs, int design_draws) {
  std::vector<SMGModel> models;
  std::vector<double> weights;
  std::vector<double> gamma2;
  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    const double w = draws.rank_weights(static_cast<Eigen::Index>(c));
    if (w < 1e-12) continue;
    const auto& ch = draws.chains[c];
    const std::size_t t_count = ch.draws.size();
    const std::size_t k = std::min<std::size_t>(t_count, static_cast<std::size_t>(std::max(design_draws, 1)));
    for (std::size_t s = 0; s < k; ++s) {
      const auto& d = ch.draws[(s * t_count) / k + (t_count / k) - 1];
      models.emplace_back(SubspaceBasis(d.u), SubspaceBasis(d.v), d.sigma2);
      weights.push_back(w / static_cast<double>(k));
      gamma2.push_back(d.eta2 / d.sigma2);
    }
  }
  return DesignState(models, weights, gamma2, obs);
}

/// One MaxEnt round: fit, screen the complement, pick a greedy batch.
template <class Rng>
BatchSelection maxent_propose(const ObservationSet& obs, const MaxEntConfig& config, MaxEntMode mode, Rng& rng) {
  std::vector<Entry> unobserved = obs.complement();
  if (mode == MaxEntMode::empirical_bayes) {
    const SMGModel model = empirical_bayes_model(obs.with_eta2(config.eta2), config.lambda);
    const auto candidates = screen_candidates(coherence_profile(model), unobserved, config.screening_fraction());
    DesignState state(model, obs.with_eta2(config.eta2));
    return select_batch(state, candidates, config.batch_size);
  }
  std::vector<int> ranks;
  const int cap = static_cast<int>(std::min(obs.rows(), obs.cols())) - 1;
  for (int r = 1; r <= std::min(config.priors.max_rank(), cap); ++r) ranks.push_back(r);
  PriorSpec priors = config.priors;
  priors.rank_prior.resize(ranks.size());
  double total = 0.0;
  for (double p : priors.rank_prior) total += p;
  for (double& p : priors.rank_prior) p /= total;
  std::uniform_int_distribution<std::uint64_t> seeds;
  const GibbsDraws draws = run_gibbs(obs, priors, ranks, config.chain, seeds(rng));
  const int map_rank = draws.map_rank();
  const auto& top = draws.chains[static_cast<std::size_t>(map_rank - ranks.front())].draws.back();
  const auto profile = coherence_profile(SubspaceBasis(top.u), SubspaceBasis(top.v));
  const auto candidates = screen_candidates(profile, unobserved, config.screening_fraction());
  DesignState state = fully_bayes_state(draws, obs, config.design_draws);
  return select_batch(state, candidates, config.batch_size);
}

/// Balanced start followed by n_seq sequentially chosen entries. `on_batch` sees the trace after
/// the initial design and after every batch; on an oracle failure the partial trace is handed to
/// `on_batch` before the error propagates.
template <class Rng>
SamplingTrace maxent_run(const MaxEntConfig& config, const EntryOracle& oracle, MaxEntMode mode, Rng& rng,
                         const BatchCallback& on_batch = {}) {
  if (config.m1 < 2 || config.m2 < 2) throw InvalidArgument("MaxEnt needs at least a 2 x 2 grid");
  const Eigen::Index n_ini = config.n_ini > 0 ? config.n_ini : std::max(config.m1, config.m2);
  if (n_ini < std::max(config.m1, config.m2)) throw InvalidArgument("n_ini must be at least m1 v m2");
  if (n_ini + config.n_seq > config.m1 * config.m2) throw InvalidArgument("budget exceeds the number of cells");
  if (config.batch_size < 1) throw InvalidArgument("batch size must be at least 1");
  SamplingTrace trace;
  auto query = [&](const std::vector<Entry>& cells) {
    const std::size_t begin = trace.indices.size();
    for (const auto& e : cells) {
      double v = 0.0;
      try {
        v = oracle(e);
      } catch (...) {
        if (on_batch && trace.indices.size() > begin) on_batch(trace, begin);
        throw;
      }
      trace.indices.push_back(e);
      trace.values.push_back(v);
    }
    if (on_batch) on_batch(trace, begin);
  };
  query(initial_design(config.m1, config.m2, n_ini, rng));
  Eigen::Index remaining = config.n_seq;
  while (remaining > 0) {
    MaxEntConfig round = config;
    round.batch_size = std::min<std::size_t>(config.batch_size, static_cast<std::size_t>(remaining));
    const ObservationSet obs = trace_observations(trace, config.m1, config.m2, config.eta2);
    const BatchSelection pick = maxent_propose(obs, round, mode, rng);
    query(pick.indices);
    remaining -= static_cast<Eigen::Index>(pick.indices.size());
  }
  return trace;
}

}  // namespace amc
