#pragma once

// Experiment driver: synthetic or replayed ground truth, sampling policies, error traces,
// summaries and result files.

#include "amc/checkpoint.hpp"
#include "amc/gibbs.hpp"
#include "amc/linalg.hpp"
#include "amc/maxent.hpp"
#include "amc/nuclear.hpp"
#include "amc/smg.hpp"
#include "amc/types.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace amc {

enum class Policy { maxent_fully_bayes, maxent_empirical_bayes, uniform, balanced_then_uniform };

inline std::string to_string(Policy p) {
  switch (p) {
    case Policy::maxent_fully_bayes: return "maxent-fully-bayes";
    case Policy::maxent_empirical_bayes: return "maxent-empirical-bayes";
    case Policy::uniform: return "uniform";
    case Policy::balanced_then_uniform: return "balanced-then-uniform";
  }
  return "unknown";
}

inline Policy parse_policy(const std::string& s) {
  for (auto p : {Policy::maxent_fully_bayes, Policy::maxent_empirical_bayes, Policy::uniform,
                 Policy::balanced_then_uniform})
    if (to_string(p) == s) return p;
  throw InvalidArgument("unknown policy '" + s + "'");
}

inline bool is_maxent(Policy p) {
  return p == Policy::maxent_fully_bayes || p == Policy::maxent_empirical_bayes;
}

struct ExperimentConfig {
  Eigen::Index m1 = 7;
  Eigen::Index m2 = 7;
  int true_rank = 2;
  double sigma2 = 1.0;
  double eta2 = 1e-4;
  PriorSpec priors;
  Eigen::Index n_ini = 0;  ///< 0 selects m1 v m2
  Eigen::Index n_seq = 28;
  std::size_t batch_size = 1;
  int chain_T = 200;
  int chain_burn_in = 100;
  int chain_thin = 1;
  int design_draws = 20;
  std::vector<Policy> policies{Policy::maxent_empirical_bayes};
  int replications = 1;
  std::uint64_t seed = 1;
  std::optional<std::string> dataset;
  double keep_fraction = 0.0;
  std::optional<double> lambda;
  bool record_wall_time = false;
  int threads = 1;

  Eigen::Index initial_size() const { return n_ini > 0 ? n_ini : std::max(m1, m2); }

  void validate() const {
    if (m1 < 2 || m2 < 2) throw InvalidArgument("matrix dimensions must be at least 2");
    if (true_rank < 1 || true_rank >= std::min(m1, m2)) throw InvalidArgument("true_rank must satisfy 1 <= R < min(m1, m2)");
    if (!(sigma2 > 0.0) || !(eta2 > 0.0)) throw InvalidArgument("sigma2 and eta2 must be positive");
    priors.validate();
    if (policies.empty()) throw InvalidArgument("no policies requested");
    if (replications < 1) throw InvalidArgument("replications must be at least 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
    if (n_seq < 0 || n_ini < 0) throw InvalidArgument("budgets must be non-negative");
    if (chain_T < 1 || chain_thin < 1) throw InvalidArgument("chain length and thinning must be positive");
    const Eigen::Index ini = initial_size();
    for (auto p : policies) {
      if ((is_maxent(p) || p == Policy::balanced_then_uniform) && ini < std::max(m1, m2)) {
        throw InvalidArgument("n_ini must be at least m1 v m2 for " + to_string(p));
      }
    }
    if (ini + n_seq > m1 * m2) throw InvalidArgument("n_ini + n_seq exceeds m1 * m2");
    if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0)) throw InvalidArgument("keep_fraction must lie in [0, 1]");
    if (threads < 1) throw InvalidArgument("threads must be at least 1");
  }

  MaxEntConfig maxent_config() const {
    MaxEntConfig c;
    c.m1 = m1;
    c.m2 = m2;
    c.n_ini = initial_size();
    c.n_seq = n_seq;
    c.batch_size = batch_size;
    c.eta2 = eta2;
    c.keep_fraction = keep_fraction;
    c.priors = priors;
    c.chain.T = chain_T;
    c.chain.burn_in = chain_burn_in;
    c.chain.thin = chain_thin;
    c.chain.parallel = false;
    c.design_draws = design_draws;
    c.lambda = lambda;
    return c;
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["m1"] = c.m1;
  j["m2"] = c.m2;
  j["true_rank"] = c.true_rank;
  j["sigma2"] = c.sigma2;
  j["eta2"] = c.eta2;
  j["priors"] = {{"alpha_eta2", c.priors.alpha_eta2},
                 {"beta_eta2", c.priors.beta_eta2},
                 {"alpha_sigma2", c.priors.alpha_sigma2},
                 {"beta_sigma2", c.priors.beta_sigma2},
                 {"rank_prior", c.priors.rank_prior}};
  j["n_ini"] = c.initial_size();
  j["n_seq"] = c.n_seq;
  j["batch_size"] = c.batch_size;
  j["chain"] = {{"T", c.chain_T}, {"burn_in", c.chain_burn_in}, {"thin", c.chain_thin}};
  j["design_draws"] = c.design_draws;
  j["policies"] = nlohmann::json::array();
  for (auto p : c.policies) j["policies"].push_back(to_string(p));
  j["replications"] = c.replications;
  j["seed"] = c.seed;
  j["dataset"] = c.dataset ? nlohmann::json(*c.dataset) : nlohmann::json(nullptr);
  j["keep_fraction"] = c.keep_fraction;
  j["lambda"] = c.lambda ? nlohmann::json(*c.lambda) : nlohmann::json(nullptr);
  j["record_wall_time"] = c.record_wall_time;
  j["threads"] = c.threads;
  return j;
}

/// Fields present in `j` override `base`; unknown keys are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {}) {
  static const std::vector<std::string> known{"m1", "m2", "true_rank", "sigma2", "eta2", "priors", "n_ini", "n_seq",
                                              "batch_size", "chain", "design_draws", "policies", "policy",
                                              "replications", "seed", "dataset", "keep_fraction", "lambda",
                                              "record_wall_time", "threads"};
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw InvalidArgument("unknown config key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("m1", base.m1);
    get("m2", base.m2);
    get("true_rank", base.true_rank);
    get("sigma2", base.sigma2);
    get("eta2", base.eta2);
    get("n_ini", base.n_ini);
    get("n_seq", base.n_seq);
    get("batch_size", base.batch_size);
    get("design_draws", base.design_draws);
    get("replications", base.replications);
    get("seed", base.seed);
    get("keep_fraction", base.keep_fraction);
    get("record_wall_time", base.record_wall_time);
    get("threads", base.threads);
    if (j.contains("dataset")) {
      base.dataset = j["dataset"].is_null() ? std::nullopt : std::optional<std::string>(j["dataset"].get<std::string>());
    }
    if (j.contains("lambda")) {
      base.lambda = j["lambda"].is_null() ? std::nullopt : std::optional<double>(j["lambda"].get<double>());
    }
    if (j.contains("priors")) {
      const auto& p = j["priors"];
      if (p.contains("alpha_eta2")) base.priors.alpha_eta2 = p["alpha_eta2"].get<double>();
      if (p.contains("beta_eta2")) base.priors.beta_eta2 = p["beta_eta2"].get<double>();
      if (p.contains("alpha_sigma2")) base.priors.alpha_sigma2 = p["alpha_sigma2"].get<double>();
      if (p.contains("beta_sigma2")) base.priors.beta_sigma2 = p["beta_sigma2"].get<double>();
      if (p.contains("rank_prior")) base.priors.rank_prior = p["rank_prior"].get<std::vector<double>>();
    }
    if (j.contains("chain")) {
      const auto& c = j["chain"];
      if (c.contains("T")) base.chain_T = c["T"].get<int>();
      if (c.contains("burn_in")) base.chain_burn_in = c["burn_in"].get<int>();
      if (c.contains("thin")) base.chain_thin = c["thin"].get<int>();
    }
    if (j.contains("policies")) {
      base.policies.clear();
      for (const auto& p : j["policies"]) base.policies.push_back(parse_policy(p.get<std::string>()));
    }
    if (j.contains("policy")) base.policies = {parse_policy(j["policy"].get<std::string>())};
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config field has the wrong type: ") + e.what());
  }
  return base;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct Dataset {
  Eigen::MatrixXd matrix;  ///< centered values; add `offset` to recover the input scale
  double offset = 0.0;
  std::size_t observed = 0;
  bool completed = false;  ///< missing cells were filled by nuclear-norm completion
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(trim(f));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline long long parse_index(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw ParseError("malformed index '" + s + "'", line);
    if (v < 1) throw ParseError("index '" + s + "' must be at least 1", line);
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("malformed index '" + s + "'", line);
  }
}

}  // namespace detail

/// CSV with header `row,col,value` and 1-based indices. Values are centered by the mean of the
/// observed cells; missing cells are filled by nuclear-norm completion of the centered data.
inline Dataset load_csv_dataset(const std::filesystem::path& path, std::optional<double> lambda = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::vector<Entry> cells;
  std::vector<double> values;
  std::map<Entry, std::size_t> first_line;
  Eigen::Index m1 = 0;
  Eigen::Index m2 = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (!header) {
      if (f.size() != 3 || f[0] != "row" || f[1] != "col" || f[2] != "value") {
        throw ParseError(path.string() + ": expected header 'row,col,value'", lineno);
      }
      header = true;
      continue;
    }
    if (f.size() != 3) throw ParseError(path.string() + ": expected 3 fields", lineno);
    const long long r = detail::parse_index(f[0], lineno);
    const long long c = detail::parse_index(f[1], lineno);
    const double v = detail::parse_double(f[2], lineno);
    if (!std::isfinite(v)) throw ParseError(path.string() + ": non-finite value", lineno);
    const Entry e{static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)};
    if (auto [it, fresh] = first_line.emplace(e, lineno); !fresh) {
      throw ParseError(path.string() + ": duplicate cell " + to_string(e) + " (first seen at line " +
                           std::to_string(it->second) + ")",
                       lineno);
    }
    cells.push_back(e);
    values.push_back(v);
    m1 = std::max(m1, e.row + 1);
    m2 = std::max(m2, e.col + 1);
  }
  if (!header) throw ParseError(path.string() + ": empty file", lineno);
  if (cells.empty()) throw ParseError(path.string() + ": no data rows", lineno);

  Dataset d;
  d.observed = cells.size();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  d.offset = mean;
  Eigen::VectorXd centered(static_cast<Eigen::Index>(values.size()));
  for (std::size_t n = 0; n < values.size(); ++n) centered(static_cast<Eigen::Index>(n)) = values[n] - mean;
  const ObservationSet obs(m1, m2, cells, centered, 0.0);
  if (static_cast<Eigen::Index>(cells.size()) == m1 * m2) {
    d.matrix = obs.scatter();
    return d;
  }
  const CompletionResult fit = lambda ? complete_nuclear_norm(obs, *lambda) : complete_nuclear_norm(obs);
  d.matrix = obs.mask().select(obs.scatter(), fit.x_hat);
  d.completed = true;
  return d;
}

/// Full matrix as `row,col,value` CSV (1-based, 17 significant digits).
inline void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& x) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "row,col,value\n";
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) out << i + 1 << ',' << j + 1 << ',' << detail::format_double(x(i, j)) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Policies and traces
// ---------------------------------------------------------------------------

struct TraceRecord {
  std::string policy;
  int replication = 0;
  Eigen::Index step = 0;  ///< number of observed entries after this batch
  std::vector<Entry> indices;  ///< entries added in this batch
  double error = 0.0;  ///< ||X - X_hat||_F
  double wall_time = 0.0;

  bool operator==(const TraceRecord&) const = default;
};

inline std::uint64_t policy_seed(std::uint64_t seed, int replication, Policy p) {
  Fnv1a h;
  h.string(to_string(p));
  return mix_seed(mix_seed(seed, static_cast<std::uint64_t>(replication)), h.digest());
}

/// Ground truth for one replication: an SMG draw, or the centered dataset.
inline Eigen::MatrixXd replication_truth(const ExperimentConfig& config, int replication,
                                         const std::optional<Dataset>& dataset) {
  if (dataset) return dataset->matrix;
  std::mt19937_64 rng(mix_seed(config.seed, 0x7275746800000000ULL + static_cast<std::uint64_t>(replication)));
  const SMGModel model = SMGModel::random(config.m1, config.m2, config.true_rank, config.sigma2, rng);
  return sample_smg(model, rng);
}

inline double completion_error(const ObservationSet& obs, const Eigen::MatrixXd& truth, std::optional<double> lambda) {
  const CompletionResult fit = lambda ? complete_nuclear_norm(obs, *lambda) : complete_nuclear_norm(obs);
  return (truth - fit.x_hat).norm();
}

/// One policy on one ground truth. Records are appended to `out` as they are produced, so a
/// failure leaves the partial trace in place.
inline void run_policy(const ExperimentConfig& config, const Eigen::MatrixXd& truth, Policy policy, int replication,
                       std::vector<TraceRecord>& out) {
  const Eigen::Index m1 = truth.rows();
  const Eigen::Index m2 = truth.cols();
  std::mt19937_64 rng(policy_seed(config.seed, replication, policy));
  std::mt19937_64 noise_rng(mix_seed(policy_seed(config.seed, replication, policy), 0x6e6f697365ULL));
  std::normal_distribution<double> z(0.0, 1.0);
  const double sd = std::sqrt(config.eta2);
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    if (!config.record_wall_time) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  auto oracle = [&](const Entry& e) { return truth(e.row, e.col) + sd * z(noise_rng); };
  auto record = [&](const SamplingTrace& trace, std::size_t begin) {
    const ObservationSet obs = trace_observations(trace, m1, m2, config.eta2);
    TraceRecord r;
    r.policy = to_string(policy);
    r.replication = replication;
    r.step = static_cast<Eigen::Index>(trace.indices.size());
    r.indices.assign(trace.indices.begin() + static_cast<std::ptrdiff_t>(begin), trace.indices.end());
    r.error = completion_error(obs, truth, config.lambda);
    r.wall_time = elapsed();
    out.push_back(std::move(r));
  };

  if (is_maxent(policy)) {
    MaxEntConfig mc = config.maxent_config();
    mc.m1 = m1;
    mc.m2 = m2;
    const auto mode = policy == Policy::maxent_fully_bayes ? MaxEntMode::fully_bayes : MaxEntMode::empirical_bayes;
    maxent_run(mc, oracle, mode, rng, record);
    return;
  }

  SamplingTrace trace;
  std::vector<Entry> pool;
  for (Eigen::Index i = 0; i < m1; ++i)
    for (Eigen::Index j = 0; j < m2; ++j) pool.push_back(Entry{i, j});
  const Eigen::Index n_ini = config.initial_size();
  std::vector<Entry> first;
  if (policy == Policy::balanced_then_uniform) {
    first = initial_design(m1, m2, n_ini, rng);
  } else {
    std::shuffle(pool.begin(), pool.end(), rng);
    first.assign(pool.begin(), pool.begin() + n_ini);
  }
  EntrySet used(first.begin(), first.end());
  std::vector<Entry> rest;
  for (const auto& e : pool)
    if (!used.contains(e)) rest.push_back(e);
  std::sort(rest.begin(), rest.end());
  std::shuffle(rest.begin(), rest.end(), rng);

  auto query = [&](const std::vector<Entry>& cells) {
    const std::size_t begin = trace.indices.size();
    for (const auto& e : cells) {
      trace.indices.push_back(e);
      trace.values.push_back(oracle(e));
    }
    record(trace, begin);
  };
  query(first);
  std::size_t next = 0;
  Eigen::Index remaining = config.n_seq;
  while (remaining > 0) {
    const auto b = std::min<std::size_t>(config.batch_size, static_cast<std::size_t>(remaining));
    query(std::vector<Entry>(rest.begin() + static_cast<std::ptrdiff_t>(next),
                             rest.begin() + static_cast<std::ptrdiff_t>(next + b)));
    next += b;
    remaining -= static_cast<Eigen::Index>(b);
  }
}

/// Every policy on every replication with a shared per-replication truth. Records land in `out`
/// ordered by replication, then policy; on failure `out` holds everything finished before it.
inline void run_policy_comparison(const ExperimentConfig& config, std::vector<TraceRecord>& out) {
  std::optional<Dataset> dataset;
  ExperimentConfig cfg = config;
  if (config.dataset) {
    dataset = load_csv_dataset(*config.dataset, config.lambda);
    cfg.m1 = dataset->matrix.rows();
    cfg.m2 = dataset->matrix.cols();
    cfg.true_rank = std::min<int>(cfg.true_rank, static_cast<int>(std::min(cfg.m1, cfg.m2)) - 1);
  }
  cfg.validate();

  const auto reps = static_cast<std::size_t>(cfg.replications);
  std::vector<std::vector<TraceRecord>> per_rep(reps);
  std::vector<std::exception_ptr> errors(reps);
  auto work = [&](std::size_t rep) {
    try {
      const Eigen::MatrixXd truth = replication_truth(cfg, static_cast<int>(rep), dataset);
      for (auto p : cfg.policies) run_policy(cfg, truth, p, static_cast<int>(rep), per_rep[rep]);
    } catch (...) {
      errors[rep] = std::current_exception();
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), reps);
  if (threads <= 1) {
    for (std::size_t r = 0; r < reps; ++r) work(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < reps; r = next++) work(r);
      });
    for (auto& t : pool) t.join();
  }
  for (std::size_t r = 0; r < reps; ++r) {
    out.insert(out.end(), per_rep[r].begin(), per_rep[r].end());
    if (errors[r]) std::rethrow_exception(errors[r]);
  }
}

inline std::vector<TraceRecord> run_policy_comparison(const ExperimentConfig& config) {
  std::vector<TraceRecord> out;
  run_policy_comparison(config, out);
  return out;
}

struct SummaryRow {
  std::string policy;
  Eigen::Index step = 0;
  std::size_t count = 0;
  double mean = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

/// Per (policy, step): mean and type-7 25th/75th percentiles of the error across replications.
/// Policies keep their first-appearance order; steps ascend.
inline std::vector<SummaryRow> summarize(const std::vector<TraceRecord>& traces) {
  std::vector<std::string> order;
  std::map<std::string, std::map<Eigen::Index, std::vector<double>>> groups;
  for (const auto& t : traces) {
    if (!groups.contains(t.policy)) order.push_back(t.policy);
    groups[t.policy][t.step].push_back(t.error);
  }
  std::vector<SummaryRow> out;
  for (const auto& p : order) {
    for (const auto& [step, errs] : groups[p]) {
      double mean = 0.0;
      for (double e : errs) mean += e;
      mean /= static_cast<double>(errs.size());
      out.push_back(SummaryRow{p, step, errs.size(), mean, quantile_type7(errs, 0.25), quantile_type7(errs, 0.75)});
    }
  }
  return out;
}

inline std::string format_indices(const std::vector<Entry>& cells) {
  std::string s;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) s += ';';
    s += std::to_string(cells[k].row + 1) + ":" + std::to_string(cells[k].col + 1);
  }
  return s;
}

inline std::vector<Entry> parse_indices(const std::string& s, std::size_t line) {
  std::vector<Entry> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ParseError("malformed index pair '" + item + "'", line);
    out.push_back(Entry{static_cast<Eigen::Index>(detail::parse_index(item.substr(0, colon), line) - 1),
                        static_cast<Eigen::Index>(detail::parse_index(item.substr(colon + 1), line) - 1)});
  }
  return out;
}

inline void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRecord>& traces) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "policy,replication,step,indices,error,wall_time\n";
  for (const auto& t : traces) {
    out << t.policy << ',' << t.replication << ',' << t.step << ',' << format_indices(t.indices) << ','
        << detail::format_double(t.error) << ',' << detail::format_double(t.wall_time) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<TraceRecord> read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::vector<TraceRecord> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 6) throw ParseError(path.string() + ": expected 6 fields", lineno);
    TraceRecord t;
    t.policy = f[0];
    t.replication = static_cast<int>(std::stol(f[1]));
    t.step = static_cast<Eigen::Index>(std::stoll(f[2]));
    t.indices = parse_indices(f[3], lineno);
    t.error = detail::parse_double(f[4], lineno);
    t.wall_time = detail::parse_double(f[5], lineno);
    out.push_back(std::move(t));
  }
  return out;
}

inline void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "policy,step,count,mean,q25,q75\n";
  for (const auto& r : rows) {
    out << r.policy << ',' << r.step << ',' << r.count << ',' << detail::format_double(r.mean) << ','
        << detail::format_double(r.q25) << ',' << detail::format_double(r.q75) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

/// trace.csv, summary.csv and config.json under `dir`.
inline void write_results(const std::vector<TraceRecord>& traces, const std::vector<SummaryRow>& summary,
                          const ExperimentConfig& config, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  write_trace_csv(dir / "trace.csv", traces);
  write_summary_csv(dir / "summary.csv", summary);
  const auto cfg_path = dir / "config.json";
  std::ofstream out(cfg_path);
  if (!out) throw IoError("cannot write " + cfg_path.string());
  out << to_json(config).dump(2) << '\n';
  if (!out) throw IoError("write failed for " + cfg_path.string());
}

}  // namespace amc
