#pragma once

// Chain checkpoints: a directory holding meta.json and one rank_<r>.tsv per chain.
//
// Each TSV starts with a header line, then one line per retained draw:
//   draw  sigma2  eta2  d_1..d_R  U(column-major, m1*R values)  V(column-major, m2*R values)
// Numbers are written with 17 significant digits, so reading back is exact. X is rebuilt as
// U diag(d) V^T, the same expression the sampler stores.

#include "amc/gibbs.hpp"
#include "amc/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace amc {

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ParseError("trailing characters in number '" + s + "'", line);
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("malformed number '" + s + "'", line);
  }
}

}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& dir, const GibbsDraws& draws) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  nlohmann::json meta;
  meta["format"] = "amc-gibbs-checkpoint";
  meta["version"] = 1;
  meta["rows"] = draws.rows();
  meta["cols"] = draws.cols();
  meta["ranks"] = nlohmann::json::array();
  meta["draws"] = nlohmann::json::array();
  meta["rank_weights"] = nlohmann::json::array();
  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    const auto& ch = draws.chains[c];
    meta["ranks"].push_back(ch.rank);
    meta["draws"].push_back(ch.draws.size());
    meta["rank_weights"].push_back(detail::format_double(draws.rank_weights(static_cast<Eigen::Index>(c))));

    const auto path = dir / ("rank_" + std::to_string(ch.rank) + ".tsv");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "draw\tsigma2\teta2";
    for (int k = 1; k <= ch.rank; ++k) out << "\td" << k;
    out << "\tU[" << draws.rows() << "x" << ch.rank << "]\tV[" << draws.cols() << "x" << ch.rank << "]\n";
    for (std::size_t t = 0; t < ch.draws.size(); ++t) {
      const auto& d = ch.draws[t];
      out << t << '\t' << detail::format_double(d.sigma2) << '\t' << detail::format_double(d.eta2);
      for (Eigen::Index k = 0; k < d.d.size(); ++k) out << '\t' << detail::format_double(d.d(k));
      for (Eigen::Index k = 0; k < d.u.size(); ++k) out << '\t' << detail::format_double(d.u.data()[k]);
      for (Eigen::Index k = 0; k < d.v.size(); ++k) out << '\t' << detail::format_double(d.v.data()[k]);
      out << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
  }
  const auto meta_path = dir / "meta.json";
  std::ofstream m(meta_path);
  if (!m) throw IoError("cannot write " + meta_path.string());
  m << meta.dump(2) << '\n';
  if (!m) throw IoError("write failed for " + meta_path.string());
}

inline GibbsDraws read_checkpoint(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  std::ifstream m(meta_path);
  if (!m) throw IoError("cannot read " + meta_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(m);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed " + meta_path.string() + ": " + e.what());
  }
  if (meta.value("format", "") != "amc-gibbs-checkpoint") throw IoError(meta_path.string() + " is not a checkpoint");
  const auto m1 = meta.at("rows").get<Eigen::Index>();
  const auto m2 = meta.at("cols").get<Eigen::Index>();
  const auto ranks = meta.at("ranks").get<std::vector<int>>();
  const auto counts = meta.at("draws").get<std::vector<std::size_t>>();
  const auto weights = meta.at("rank_weights").get<std::vector<std::string>>();
  if (ranks.size() != counts.size() || ranks.size() != weights.size()) throw IoError("inconsistent checkpoint metadata");

  GibbsDraws out;
  out.rank_weights.resize(static_cast<Eigen::Index>(ranks.size()));
  for (std::size_t c = 0; c < ranks.size(); ++c) {
    out.rank_weights(static_cast<Eigen::Index>(c)) = detail::parse_double(weights[c], 0);
    const int r = ranks[c];
    const auto path = dir / ("rank_" + std::to_string(r) + ".tsv");
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    Chain ch;
    ch.rank = r;
    std::string line;
    std::getline(in, line);
    std::size_t lineno = 1;
    const std::size_t width = 3 + static_cast<std::size_t>(r) * static_cast<std::size_t>(1 + m1 + m2);
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::vector<std::string> fields;
      std::stringstream ss(line);
      std::string f;
      while (std::getline(ss, f, '\t')) fields.push_back(f);
      if (fields.size() != width) throw ParseError(path.string() + ": expected " + std::to_string(width) + " fields", lineno);
      GibbsDraw d;
      std::size_t p = 1;
      d.sigma2 = detail::parse_double(fields[p++], lineno);
      d.eta2 = detail::parse_double(fields[p++], lineno);
      d.d.resize(r);
      for (int k = 0; k < r; ++k) d.d(k) = detail::parse_double(fields[p++], lineno);
      d.u.resize(m1, r);
      for (Eigen::Index k = 0; k < d.u.size(); ++k) d.u.data()[k] = detail::parse_double(fields[p++], lineno);
      d.v.resize(m2, r);
      for (Eigen::Index k = 0; k < d.v.size(); ++k) d.v.data()[k] = detail::parse_double(fields[p++], lineno);
      d.x = d.u * d.d.asDiagonal() * d.v.transpose();
      ch.draws.push_back(std::move(d));
    }
    if (ch.draws.size() != counts[c]) throw IoError(path.string() + ": draw count disagrees with meta.json");
    out.chains.push_back(std::move(ch));
  }
  return out;
}

}  // namespace amc
