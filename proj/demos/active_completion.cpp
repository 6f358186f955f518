// Walkthrough on a 7x7 rank-2 matrix: balanced start, empirical-Bayes MaxEnt rounds, then the
// fully Bayesian posterior with rank weights and entrywise intervals.

#include "amc/amc.hpp"

#include <cstdio>
#include <random>

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 7;
  std::mt19937_64 rng(seed);
  const amc::SMGModel model = amc::SMGModel::random(7, 7, 2, 1.0, rng);
  const Eigen::MatrixXd truth = amc::sample_smg(model, rng);
  const double eta2 = 1e-4;
  std::normal_distribution<double> z(0.0, 1.0);
  auto oracle = [&](const amc::Entry& e) { return truth(e.row, e.col) + std::sqrt(eta2) * z(rng); };

  amc::MaxEntConfig mc;
  mc.m1 = 7;
  mc.m2 = 7;
  mc.n_seq = 18;
  mc.batch_size = 3;
  mc.eta2 = eta2;
  std::mt19937_64 design_rng(amc::mix_seed(seed, 1));
  const auto report = [&](const amc::SamplingTrace& t, std::size_t begin) {
    const auto obs = amc::trace_observations(t, 7, 7, eta2);
    const double err = (amc::complete_nuclear_norm(obs).x_hat - truth).norm();
    std::printf("n=%2zu  added", t.indices.size());
    for (std::size_t k = begin; k < t.indices.size(); ++k)
      std::printf(" %s", amc::to_string(t.indices[k]).c_str());
    std::printf("  error %.4f\n", err);
  };
  const amc::SamplingTrace trace = amc::maxent_run(mc, oracle, amc::MaxEntMode::empirical_bayes, design_rng, report);
  const auto obs = amc::trace_observations(trace, 7, 7, eta2);

  amc::GibbsOptions o;
  o.T = 4000;
  const amc::GibbsDraws draws = amc::run_gibbs(obs, amc::PriorSpec{}, {1, 2, 3, 4, 5}, o, seed);
  std::printf("\nrank weights:");
  for (Eigen::Index r = 0; r < draws.rank_weights.size(); ++r) std::printf(" %.3f", draws.rank_weights(r));
  std::printf("\nposterior mean error %.4f\n\n", (amc::posterior_mean(draws) - truth).norm());

  const auto iv = amc::entry_uncertainty(draws, obs.complement(), 0.95, rng);
  std::size_t covered = 0;
  for (const auto& e : iv) {
    const double t = truth(e.entry.row, e.entry.col);
    const bool in = t >= e.lower && t <= e.upper;
    covered += in;
    std::printf("%-7s truth %+.3f  mean %+.3f  [%+.3f, %+.3f]%s\n", amc::to_string(e.entry).c_str(), t, e.point,
                e.lower, e.upper, in ? "" : "  miss");
  }
  std::printf("\ncoverage %zu/%zu\n", covered, iv.size());
  return 0;
}
