#include "amc/checkpoint.hpp"
#include "amc/harness.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

namespace {

using amc::ExperimentConfig;

struct Flags {
  ExperimentConfig cfg;
  std::vector<std::string> policies;
  std::string config_path;
  std::string out_dir = "amc_results";
  std::optional<double> lambda;
  std::string dataset;
};

void add_experiment_flags(CLI::App& cmd, Flags& f) {
  cmd.add_option("--m1", f.cfg.m1, "rows")->check(CLI::PositiveNumber);
  cmd.add_option("--m2", f.cfg.m2, "columns")->check(CLI::PositiveNumber);
  cmd.add_option("--rank", f.cfg.true_rank, "rank of the synthetic truth");
  cmd.add_option("--sigma2", f.cfg.sigma2, "signal variance of the synthetic truth");
  cmd.add_option("--eta2", f.cfg.eta2, "observation noise variance");
  cmd.add_option("--n-ini", f.cfg.n_ini, "initial budget (0 = m1 v m2)");
  cmd.add_option("--n-seq", f.cfg.n_seq, "sequential budget");
  cmd.add_option("--batch", f.cfg.batch_size, "entries per sequential round");
  cmd.add_option("--chain-T", f.cfg.chain_T, "retained draws per rank chain");
  cmd.add_option("--burn-in", f.cfg.chain_burn_in, "discarded sweeps per chain");
  cmd.add_option("--thin", f.cfg.chain_thin, "thinning interval");
  cmd.add_option("--design-draws", f.cfg.design_draws, "posterior draws per rank used for scoring");
  cmd.add_option("--policy", f.policies,
                 "maxent-fully-bayes | maxent-empirical-bayes | uniform | balanced-then-uniform (repeatable)");
  cmd.add_option("--replications", f.cfg.replications, "independent ground truths");
  cmd.add_option("--seed", f.cfg.seed, "64-bit master seed");
  cmd.add_option("--lambda", f.lambda, "nuclear-norm weight (default: MAD rule)");
  cmd.add_option("--keep-fraction", f.cfg.keep_fraction, "screening keep fraction (0 = automatic)");
  cmd.add_option("--threads", f.cfg.threads, "replications run concurrently");
  cmd.add_flag("--wall-time", f.cfg.record_wall_time, "record wall-clock seconds in the trace");
  cmd.add_option("--config", f.config_path, "JSON config; its fields override flags");
  cmd.add_option("--out", f.out_dir, "output directory")->capture_default_str();
}

ExperimentConfig resolve(const Flags& f) {
  ExperimentConfig cfg = f.cfg;
  if (!f.policies.empty()) {
    cfg.policies.clear();
    for (const auto& p : f.policies) cfg.policies.push_back(amc::parse_policy(p));
  }
  if (f.lambda) cfg.lambda = f.lambda;
  if (!f.dataset.empty()) cfg.dataset = f.dataset;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw amc::IoError("cannot open config " + f.config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw amc::ParseError(f.config_path + ": " + e.what(), 1);
    }
    cfg = amc::config_from_json(j, cfg);
  }
  return cfg;
}

void print_final_summary(const std::vector<amc::SummaryRow>& rows) {
  std::map<std::string, amc::SummaryRow> last;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (!last.contains(r.policy)) order.push_back(r.policy);
    last[r.policy] = r;
  }
  std::printf("%-26s %6s %5s %12s %12s %12s\n", "policy", "step", "reps", "mean", "q25", "q75");
  for (const auto& p : order) {
    const auto& r = last[p];
    std::printf("%-26s %6lld %5zu %12.6g %12.6g %12.6g\n", p.c_str(), static_cast<long long>(r.step), r.count, r.mean,
                r.q25, r.q75);
  }
}

int run_experiment(const Flags& f) {
  const ExperimentConfig cfg = resolve(f);
  std::vector<amc::TraceRecord> traces;
  try {
    amc::run_policy_comparison(cfg, traces);
  } catch (...) {
    if (!traces.empty()) amc::write_results(traces, amc::summarize(traces), cfg, f.out_dir);
    throw;
  }
  const auto summary = amc::summarize(traces);
  amc::write_results(traces, summary, cfg, f.out_dir);
  print_final_summary(summary);
  std::printf("wrote %s\n", f.out_dir.c_str());
  return 0;
}

struct DiagnoseFlags {
  Flags base;
  Eigen::Index n_obs = 25;
  int max_rank = 5;
  std::string checkpoint;
  double level = 0.95;
};

int run_diagnose(const DiagnoseFlags& d) {
  ExperimentConfig cfg = resolve(d.base);
  std::optional<amc::Dataset> data;
  if (cfg.dataset) {
    data = amc::load_csv_dataset(*cfg.dataset, cfg.lambda);
    cfg.m1 = data->matrix.rows();
    cfg.m2 = data->matrix.cols();
  }
  const int r_max = std::min<int>(d.max_rank, static_cast<int>(std::min(cfg.m1, cfg.m2)) - 1);
  if (r_max < 1) throw amc::InvalidArgument("matrix too small for any rank");
  if (d.n_obs < 1 || d.n_obs > cfg.m1 * cfg.m2) throw amc::InvalidArgument("--n-obs must lie in [1, m1*m2]");
  cfg.priors.rank_prior.assign(static_cast<std::size_t>(r_max), 1.0 / r_max);
  cfg.priors.validate();
  const Eigen::MatrixXd truth = amc::replication_truth(cfg, 0, data);

  std::mt19937_64 rng(amc::mix_seed(cfg.seed, 0x646961676eULL));
  std::vector<amc::Entry> cells;
  for (Eigen::Index i = 0; i < cfg.m1; ++i)
    for (Eigen::Index j = 0; j < cfg.m2; ++j) cells.push_back({i, j});
  std::shuffle(cells.begin(), cells.end(), rng);
  cells.resize(static_cast<std::size_t>(d.n_obs));
  const amc::ObservationSet obs = amc::observe_entries(truth, cells, cfg.eta2, rng);

  amc::GibbsOptions o;
  o.T = cfg.chain_T;
  o.burn_in = cfg.chain_burn_in;
  o.thin = cfg.chain_thin;
  o.lambda = cfg.lambda;
  o.parallel = cfg.threads > 1;
  std::vector<int> ranks;
  for (int r = 1; r <= r_max; ++r) ranks.push_back(r);
  const amc::GibbsDraws draws = amc::run_gibbs(obs, cfg.priors, ranks, o, cfg.seed);

  const Eigen::MatrixXd pm = amc::posterior_mean(draws);
  const amc::CompletionResult nn =
      cfg.lambda ? amc::complete_nuclear_norm(obs, *cfg.lambda) : amc::complete_nuclear_norm(obs);
  const auto missing = obs.complement();
  const auto iv = amc::entry_uncertainty(draws, missing, d.level, rng);
  std::size_t covered = 0;
  for (const auto& e : iv) {
    const double t = truth(e.entry.row, e.entry.col);
    if (t >= e.lower && t <= e.upper) ++covered;
  }

  nlohmann::json out;
  out["m1"] = cfg.m1;
  out["m2"] = cfg.m2;
  out["observed"] = obs.size();
  out["rank_weights"] = nlohmann::json::array();
  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    out["rank_weights"].push_back({{"rank", draws.chains[c].rank},
                                   {"weight", draws.rank_weights(static_cast<Eigen::Index>(c))},
                                   {"ql_acceptance", draws.chains[c].ql_acceptance}});
  }
  out["posterior_mean_error"] = (pm - truth).norm();
  out["nuclear_norm_error"] = (nn.x_hat - truth).norm();
  out["interval_level"] = d.level;
  out["interval_coverage"] = iv.empty() ? 1.0 : static_cast<double>(covered) / static_cast<double>(iv.size());
  std::cout << out.dump(2) << '\n';
  if (!d.checkpoint.empty()) amc::write_checkpoint(d.checkpoint, draws);
  return 0;
}

int run_compare(const std::vector<std::string>& inputs, const std::string& out_path) {
  std::vector<amc::TraceRecord> all;
  for (const auto& in : inputs) {
    std::filesystem::path p(in);
    if (std::filesystem::is_directory(p)) p /= "trace.csv";
    auto t = amc::read_trace_csv(p);
    all.insert(all.end(), t.begin(), t.end());
  }
  const auto summary = amc::summarize(all);
  if (!out_path.empty()) amc::write_summary_csv(out_path, summary);
  print_final_summary(summary);
  return 0;
}

void emit_error(const std::string& kind, const std::string& message) {
  const nlohmann::json rec{{"status", "error"}, {"kind", kind}, {"message", message}};
  std::cerr << rec.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active matrix completion experiments"};
  app.require_subcommand(1);

  Flags sim;
  auto* simulate = app.add_subcommand("simulate", "policy comparison on synthetic SMG ground truths");
  add_experiment_flags(*simulate, sim);

  Flags rep;
  auto* replay = app.add_subcommand("replay", "policy comparison on a ratings CSV (row,col,value)");
  add_experiment_flags(*replay, rep);
  replay->add_option("--dataset", rep.dataset, "CSV file")->required()->check(CLI::ExistingFile);

  DiagnoseFlags diag;
  auto* diagnose = app.add_subcommand("gibbs-diagnose", "rank posterior, intervals and errors for one instance");
  add_experiment_flags(*diagnose, diag.base);
  diagnose->add_option("--dataset", diag.base.dataset, "CSV file used as ground truth");
  diagnose->add_option("--n-obs", diag.n_obs, "uniformly observed entries");
  diagnose->add_option("--max-rank", diag.max_rank, "largest rank in the support");
  diagnose->add_option("--level", diag.level, "interval level");
  diagnose->add_option("--checkpoint", diag.checkpoint, "directory for the chain checkpoint");

  std::vector<std::string> inputs;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "merge trace files and summarize final errors");
  compare->add_option("inputs", inputs, "trace.csv files or result directories")->required();
  compare->add_option("--out", compare_out, "summary CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what());
    return 2;
  }

  try {
    if (*simulate) return run_experiment(sim);
    if (*replay) return run_experiment(rep);
    if (*diagnose) return run_diagnose(diag);
    if (*compare) return run_compare(inputs, compare_out);
  } catch (const amc::Error& e) {
    emit_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
  return 0;
}
