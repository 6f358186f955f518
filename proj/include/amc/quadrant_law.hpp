#pragma once

// Quadrant law QL(mu, delta2) on positive singular values:
//   p(d) proportional to exp(-|d - mu|^2 / (2 delta2)) prod_{k<l} |d_k^2 - d_l^2|, d_k > 0.

#include "amc/linalg.hpp"
#include "amc/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <tuple>

namespace amc {

inline double quadrant_law_log_kernel(const Eigen::VectorXd& d, const Eigen::VectorXd& mu, double delta2) {
  const Eigen::Index r = d.size();
  for (Eigen::Index k = 0; k < r; ++k)
    if (!(d(k) > 0.0)) return -std::numeric_limits<double>::infinity();
  double s = -(d - mu).squaredNorm() / (2.0 * delta2);
  for (Eigen::Index k = 0; k < r; ++k)
    for (Eigen::Index l = k + 1; l < r; ++l) s += std::log(std::abs(d(k) * d(k) - d(l) * d(l)));
  return s;
}

/// Change in log target when coordinate k moves from d(k) to x.
inline double quadrant_law_log_ratio(const Eigen::VectorXd& d, Eigen::Index k, double x,
                                     const Eigen::VectorXd& mu, double delta2) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  if (x == d(k)) return 0.0;
  const double old = d(k);
  double s = ((old - mu(k)) * (old - mu(k)) - (x - mu(k)) * (x - mu(k))) / (2.0 * delta2);
  for (Eigen::Index l = 0; l < d.size(); ++l) {
    if (l == k) continue;
    const double dl2 = d(l) * d(l);
    s += std::log(std::abs(x * x - dl2)) - std::log(std::abs(old * old - dl2));
  }
  return s;
}

/// Random-walk scale multiplier with acceptance bookkeeping; tuned toward 30-45% acceptance.
struct QuadrantLawTuning {
  double scale = 1.0;
  std::size_t accepted = 0;
  std::size_t proposed = 0;
  std::size_t window_accepted = 0;
  std::size_t window_proposed = 0;

  double acceptance() const {
    return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
  }

  /// Adjust the scale from the acceptance rate of the most recent window.
  void adapt() {
    if (window_proposed < 50) return;
    const double rate = static_cast<double>(window_accepted) / static_cast<double>(window_proposed);
    if (rate < 0.30) scale *= 0.8;
    else if (rate > 0.45) scale *= 1.25;
    window_accepted = 0;
    window_proposed = 0;
  }
};

/// n_mh_steps sweeps of single-coordinate Metropolis-Hastings. Proposals are |d_k + c delta z|,
/// a Gaussian walk reflected at 0, which is symmetric so the acceptance ratio is the target ratio.
template <class Rng>
Eigen::VectorXd sample_quadrant_law(const Eigen::VectorXd& mu, double delta2, Eigen::VectorXd current,
                                    Rng& rng, int n_mh_steps, QuadrantLawTuning* tuning = nullptr) {
  if (!(delta2 > 0.0)) throw InvalidArgument("quadrant law needs delta2 > 0");
  if (mu.size() != current.size()) throw InvalidArgument("quadrant law mean and state differ in length");
  for (Eigen::Index k = 0; k < current.size(); ++k)
    if (!(current(k) > 0.0)) throw InvalidArgument("quadrant law state must be positive");
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double step = (tuning ? tuning->scale : 1.0) * std::sqrt(delta2);
  for (int s = 0; s < n_mh_steps; ++s) {
    for (Eigen::Index k = 0; k < current.size(); ++k) {
      const double x = std::abs(current(k) + step * z(rng));
      const double lr = quadrant_law_log_ratio(current, k, x, mu, delta2);
      const bool accept = lr >= 0.0 || std::log(u01(rng)) < lr;
      if (accept) current(k) = x;
      if (tuning) {
        ++tuning->proposed;
        ++tuning->window_proposed;
        if (accept) {
          ++tuning->accepted;
          ++tuning->window_accepted;
        }
      }
    }
  }
  return current;
}

/// log C_R where the QL(0, delta2) normalizer is Z_R(delta2) = delta2^{R^2/2} C_R and
/// C_R = int_{s>0} exp(-|s|^2/2) prod_{k<l} |s_k^2 - s_l^2| ds.
/// Estimated by importance sampling from independent half-normals (exact for R = 1).
inline double quadrant_law_log_constant(int r, std::size_t particles = 100000, std::uint64_t seed = 20240601) {
  if (r < 1) throw InvalidArgument("rank must be positive");
  static std::mutex mutex;
  static std::map<std::tuple<int, std::size_t, std::uint64_t>, double> cache;
  const auto key = std::make_tuple(r, particles, seed);
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  // Half-normal proposal density is prod 2 phi(s_k), so C_R = (2pi)^{R/2} 2^{-R} E[prod |s_k^2 - s_l^2|].
  double log_mean = 0.0;
  if (r > 1) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(r));
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd logs(static_cast<Eigen::Index>(particles));
    Eigen::VectorXd s(r);
    for (std::size_t p = 0; p < particles; ++p) {
      for (int k = 0; k < r; ++k) s(k) = std::abs(z(rng));
      double lw = 0.0;
      for (int k = 0; k < r; ++k)
        for (int l = k + 1; l < r; ++l) lw += std::log(std::abs(s(k) * s(k) - s(l) * s(l)));
      logs(static_cast<Eigen::Index>(p)) = lw;
    }
    log_mean = log_sum_exp(logs) - std::log(static_cast<double>(particles));
  }
  const double value = 0.5 * r * std::log(2.0 * std::numbers::pi) - r * std::log(2.0) + log_mean;
  std::lock_guard lock(mutex);
  cache.emplace(key, value);
  return value;
}

/// Normalized log density of QL(0, delta2) at d.
inline double quadrant_law_log_density(const Eigen::VectorXd& d, double delta2) {
  const int r = static_cast<int>(d.size());
  const double kernel = quadrant_law_log_kernel(d, Eigen::VectorXd::Zero(r), delta2);
  return kernel - 0.5 * r * r * std::log(delta2) - quadrant_law_log_constant(r);
}

}  // namespace amc
