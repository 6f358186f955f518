#include "amc/coherence.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace amc;
using amc::testing::dense_conditional;
using amc::testing::random_cells;

namespace {

template <class Rng>
double log_uniform(double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

template <class Rng>
SMGModel small_model(Rng& rng) {
  std::uniform_int_distribution<Eigen::Index> dim(2, 8);
  const Eigen::Index m1 = dim(rng);
  const Eigen::Index m2 = dim(rng);
  std::uniform_int_distribution<Eigen::Index> rank(1, std::min<Eigen::Index>(3, std::min(m1, m2) - 1));
  std::uniform_real_distribution<double> s2(0.5, 2.0);
  return SMGModel::random(m1, m2, rank(rng), s2(rng), rng);
}

ObservationSet latent_obs(const SMGModel& model, std::vector<Entry> cells, double eta2) {
  const auto n = static_cast<Eigen::Index>(cells.size());
  return ObservationSet(model.rows(), model.cols(), std::move(cells), Eigen::VectorXd::Zero(n), eta2);
}

}  // namespace

TEST(Coherence, Spike) {
  const SubspaceBasis u(Eigen::MatrixXd::Identity(3, 1));
  EXPECT_DOUBLE_EQ(coherence(u, 0), 1.0);
  EXPECT_DOUBLE_EQ(coherence(u, 1), 0.0);
  EXPECT_DOUBLE_EQ(coherence(u, 2), 0.0);
  EXPECT_DOUBLE_EQ(cross_coherence(u, 0, 1), 0.0);
}

TEST(Coherence, Constant) {
  const SubspaceBasis u(Eigen::MatrixXd::Constant(4, 1, 0.5));
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(coherence(u, i), 0.25, 1e-15);
  const SubspaceBasis w(Eigen::MatrixXd::Constant(2, 1, 1.0 / std::sqrt(2.0)));
  EXPECT_NEAR(cross_coherence(w, 0, 1), 0.5, 1e-15);
}

TEST(Coherence, TraceIdentityAndProjectorAgreement) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const SubspaceBasis u(uniform_stiefel(6 + t % 5, 1 + t % 4, rng));
    const ProjectionMatrix p = projection_from_basis(u);
    const CoherenceProfile prof = coherence_profile(u, u);
    EXPECT_NEAR(prof.row_coherences.sum(), static_cast<double>(u.rank()), 1e-10);
    EXPECT_EQ(prof.max_row, prof.row_coherences.maxCoeff());
    EXPECT_GE(prof.row_coherences.minCoeff(), 0.0);
    EXPECT_LE(prof.row_coherences.maxCoeff(), 1.0 + 1e-12);
    for (Eigen::Index i = 0; i < u.dim(); ++i) {
      EXPECT_NEAR(coherence(p, i), coherence(u, i), 1e-12);
      for (Eigen::Index k = 0; k < u.dim(); ++k) {
        EXPECT_NEAR(cross_coherence(u, i, k), p.matrix()(i, k), 1e-12);
        EXPECT_EQ(cross_coherence(u, i, k), cross_coherence(u, k, i));
      }
    }
  }
}

TEST(Coherence, IndexErrors) {
  const SubspaceBasis u(Eigen::MatrixXd::Identity(3, 1));
  EXPECT_THROW(coherence(u, 3), IndexError);
  EXPECT_THROW(cross_coherence(u, -1, 0), IndexError);
}

TEST(CrossCoherenceVector, CauchySchwarz) {
  std::mt19937_64 rng(2);
  const SMGModel model = SMGModel::random(7, 6, 3, 1.0, rng);
  const auto cells = random_cells(7, 6, 10, rng);
  const Entry t{2, 4};
  const auto nu = cross_coherence_vector(model, cells, t);
  ASSERT_EQ(nu.values.size(), 10);
  for (std::size_t n = 0; n < cells.size(); ++n) {
    const double bound = std::sqrt(coherence(model.u(), t.row) * coherence(model.u(), cells[n].row)) *
                         std::sqrt(coherence(model.v(), t.col) * coherence(model.v(), cells[n].col));
    EXPECT_LE(std::abs(nu.values(static_cast<Eigen::Index>(n))), bound + 1e-10);
  }
}

TEST(PriorVariance, Examples) {
  const SubspaceBasis e1(Eigen::MatrixXd::Identity(3, 1));
  const SMGModel spike{e1, e1, 1.0};
  EXPECT_DOUBLE_EQ(prior_variance(spike, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(prior_variance(spike, 0, 1), 0.0);
  const SMGModel flat{SubspaceBasis(Eigen::MatrixXd::Constant(4, 1, 0.5)),
                      SubspaceBasis(Eigen::MatrixXd::Constant(3, 1, 1.0 / std::sqrt(3.0))), 2.0};
  EXPECT_NEAR(prior_variance(flat, 3, 2), 2.0 / 12.0, 1e-15);
}

TEST(PriorVariance, MatchesMonteCarlo) {
  std::mt19937_64 rng(3);
  const SMGModel model = SMGModel::random(4, 5, 2, 1.5, rng);
  const int n = 100000;
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(4, 5);
  Eigen::MatrixXd s4 = Eigen::MatrixXd::Zero(4, 5);
  for (int t = 0; t < n; ++t) {
    const Eigen::MatrixXd x = sample_smg(model, rng);
    s2 += x.cwiseProduct(x);
    s4 += x.cwiseProduct(x).cwiseProduct(x.cwiseProduct(x));
  }
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) {
      const double m = s2(i, j) / n;
      EXPECT_LE(std::abs(m - prior_variance(model, i, j)), 5.0 * std::sqrt((s4(i, j) / n - m * m) / n));
    }
}

TEST(ConditionalVariance, NoObservationsIsPrior) {
  std::mt19937_64 rng(4);
  const SMGModel model = SMGModel::random(5, 5, 2, 1.2, rng);
  const auto obs = ObservationSet::empty(5, 5, 0.1);
  EXPECT_NEAR(conditional_variance(model, obs, {1, 3}), prior_variance(model, 1, 3), 1e-15);
  EXPECT_NEAR(conditional_covariance(model, obs, {1, 3}, {2, 0}),
              1.2 * cross_coherence(model.u(), 1, 2) * cross_coherence(model.v(), 3, 0), 1e-15);
}

TEST(ConditionalVariance, UncorrelatedTargetKeepsPrior) {
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(4, 2);
  u(0, 0) = 1.0;
  u(1, 1) = 1.0;
  const SMGModel model{SubspaceBasis(u), SubspaceBasis(u), 1.0};
  const ObservationSet obs(4, 4, {{0, 0}}, Eigen::VectorXd::Ones(1), 0.01);
  EXPECT_NEAR(conditional_variance(model, obs, {1, 1}), prior_variance(model, 1, 1), 1e-15);
  EXPECT_LT(conditional_variance(model, obs, {0, 1}), prior_variance(model, 0, 1) + 1e-15);
}

TEST(ConditionalVariance, MatchesConditionalPosterior) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const SMGModel model = small_model(rng);
    const Eigen::Index total = model.rows() * model.cols();
    auto cells = random_cells(model.rows(), model.cols(), std::min<Eigen::Index>(total, 12), rng);
    const auto n_obs = std::min<std::size_t>(cells.size() - 2, 8);
    const ObservationSet obs =
        observe_entries(sample_smg(model, rng), std::vector<Entry>(cells.begin(), cells.begin() + n_obs), 0.05, rng);
    const std::vector<Entry> targets(cells.begin() + n_obs, cells.end());
    const auto post = conditional_posterior(model, obs, targets);
    for (std::size_t a = 0; a < targets.size(); ++a) {
      const auto ia = static_cast<Eigen::Index>(a);
      EXPECT_NEAR(conditional_variance(model, obs, targets[a]), post.covariance(ia, ia), 1e-10);
      EXPECT_GE(conditional_variance(model, obs, targets[a]), -1e-10);
      for (std::size_t b = 0; b < targets.size(); ++b) {
        const double c_ab = conditional_covariance(model, obs, targets[a], targets[b]);
        EXPECT_NEAR(c_ab, post.covariance(ia, static_cast<Eigen::Index>(b)), 1e-10);
        EXPECT_NEAR(c_ab, conditional_covariance(model, obs, targets[b], targets[a]), 1e-12);
      }
    }
  }
}

TEST(ConditionalVariance, RejectsObservedEntries) {
  std::mt19937_64 rng(6);
  const SMGModel model = SMGModel::random(4, 4, 1, 1.0, rng);
  const ObservationSet obs(4, 4, {{1, 1}}, Eigen::VectorXd::Ones(1), 0.1);
  EXPECT_THROW(conditional_variance(model, obs, {1, 1}), DomainError);
  EXPECT_THROW(conditional_covariance(model, obs, {0, 0}, {1, 1}), DomainError);
  EXPECT_THROW(variance_after_update(model, obs, {1, 1}, {0, 0}), DomainError);
}

TEST(VarianceAfterUpdate, TargetEqualsNew) {
  std::mt19937_64 rng(7);
  const SMGModel model = SMGModel::random(5, 4, 2, 1.0, rng);
  const ObservationSet obs = latent_obs(model, {{0, 0}, {2, 3}}, 0.2);
  const Entry e{1, 2};
  const double v = conditional_variance(model, obs, e);
  EXPECT_NEAR(variance_after_update(model, obs, e, e), v - v * v / (v + 0.2), 1e-14);
}

TEST(VarianceAfterUpdate, ZeroCovarianceLeavesVariance) {
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(4, 2);
  u(0, 0) = 1.0;
  u(1, 1) = 1.0;
  const SMGModel model{SubspaceBasis(u), SubspaceBasis(u), 1.0};
  const ObservationSet obs = latent_obs(model, {{0, 1}}, 0.1);
  EXPECT_NEAR(variance_after_update(model, obs, {0, 0}, {1, 1}), conditional_variance(model, obs, {1, 1}), 1e-15);
}

TEST(VarianceAfterUpdate, IdentityAgainstRecompute) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 500; ++t) {
    const SMGModel model = small_model(rng);
    const Eigen::Index total = model.rows() * model.cols();
    std::uniform_int_distribution<Eigen::Index> nd(0, std::min<Eigen::Index>(10, total - 2));
    const Eigen::Index n = nd(rng);
    const auto cells = random_cells(model.rows(), model.cols(), n + 2, rng);
    const double eta2 = log_uniform(1e-3, 1e-1, rng);
    const ObservationSet obs = latent_obs(model, std::vector<Entry>(cells.begin(), cells.begin() + n), eta2);
    const Entry added = cells[static_cast<std::size_t>(n)];
    const Entry target = cells[static_cast<std::size_t>(n + 1)];
    const double identity = variance_after_update(model, obs, added, target);
    const double direct = conditional_variance(model, obs.appended(added, 0.0), target);
    ASSERT_LE(std::abs(identity - direct), 1e-8 * std::max(std::abs(direct), 1e-12) + 1e-15) << "instance " << t;
    ASSERT_LE(identity, conditional_variance(model, obs, target) + 1e-15);
  }
}

TEST(ErrorDecayBound, EmptyPrefixIsPrior) {
  std::mt19937_64 rng(9);
  const SMGModel model = SMGModel::random(5, 5, 2, 1.4, rng);
  const auto b = error_decay_lower_bound(model, {{0, 0}, {1, 1}}, {2, 2}, 0, 0.1);
  EXPECT_NEAR(b.value, prior_variance(model, 2, 2), 1e-15);
  EXPECT_EQ(b.degenerate_steps, 0);
}

TEST(ErrorDecayBound, UncorrelatedSequenceKeepsPrior) {
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(4, 2);
  u(0, 0) = 1.0;
  u(1, 1) = 1.0;
  const SMGModel model{SubspaceBasis(u), SubspaceBasis(u), 1.0};
  const auto b = error_decay_lower_bound(model, {{0, 0}, {0, 1}, {1, 0}}, {1, 1}, 3, 0.1);
  EXPECT_NEAR(b.value, prior_variance(model, 1, 1), 1e-15);
}

TEST(ErrorDecayBound, ZeroVarianceGuardFlagsSteps) {
  const SubspaceBasis e1(Eigen::MatrixXd::Identity(3, 1));
  const SMGModel model{e1, e1, 1.0};
  const auto b = error_decay_lower_bound(model, {{1, 1}, {0, 0}}, {0, 1}, 2, 0.0);
  EXPECT_EQ(b.degenerate_steps, 2);
  EXPECT_EQ(b.value, 0.0);
}

TEST(ErrorDecayBound, NoiselessRedundantCellsAreSkipped) {
  std::mt19937_64 rng(10);
  const SMGModel model = SMGModel::random(4, 4, 1, 1.0, rng);
  std::vector<Entry> seq = random_cells(4, 4, 16, rng);
  const Entry target = seq.back();
  seq.pop_back();
  const auto b = error_decay_lower_bound(model, seq, target, seq.size(), 0.0);
  EXPECT_GT(b.degenerate_steps, 0);
  EXPECT_GE(b.value, 0.0);
}

TEST(ErrorDecayBound, MatchesDenseProductAndBoundsVariance) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 100; ++t) {
    const SMGModel model = small_model(rng);
    const Eigen::Index total = model.rows() * model.cols();
    const Eigen::Index n = std::min<Eigen::Index>(4, total - 1);
    const auto cells = random_cells(model.rows(), model.cols(), n + 1, rng);
    const std::vector<Entry> seq(cells.begin(), cells.begin() + n);
    const Entry target = cells.back();
    const double eta2 = log_uniform(1e-3, 1e-1, rng);
    const double gamma2 = eta2 / model.sigma2();
    double product = prior_variance(model, target);
    for (Eigen::Index k = 0; k < n; ++k) {
      const ObservationSet prefix = latent_obs(model, std::vector<Entry>(seq.begin(), seq.begin() + k), eta2);
      const auto joint = dense_conditional(model, prefix, {seq[static_cast<std::size_t>(k)], target});
      const double corr2 = joint.covariance(0, 1) * joint.covariance(0, 1) /
                           (joint.covariance(0, 0) * joint.covariance(1, 1));
      product *= 1.0 - corr2 / (1.0 + gamma2);
    }
    const auto bound = error_decay_lower_bound(model, seq, target, static_cast<std::size_t>(n), eta2);
    EXPECT_NEAR(bound.value, product, 1e-9 * std::max(1.0, product));
    EXPECT_LE(bound.value, conditional_variance(model, latent_obs(model, seq, eta2), target) + 1e-10);
    EXPECT_LE(bound.value, prior_variance(model, target) + 1e-15);
  }
}

TEST(ErrorDecayBound, MonotoneVarianceAndBoundAlongFullSequences) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 100; ++t) {
    const SMGModel model = small_model(rng);
    const Eigen::Index total = model.rows() * model.cols();
    std::vector<Entry> seq = random_cells(model.rows(), model.cols(), total, rng);
    const Entry target = seq.back();
    seq.pop_back();
    const double eta2 = log_uniform(1e-3, 1e-1, rng);
    double prev = conditional_variance(model, ObservationSet::empty(model.rows(), model.cols(), eta2), target);
    for (std::size_t n = 1; n <= seq.size(); ++n) {
      const ObservationSet obs = latent_obs(model, std::vector<Entry>(seq.begin(), seq.begin() + n), eta2);
      const double v = conditional_variance(model, obs, target);
      ASSERT_LE(v, prev + 1e-10);
      ASSERT_GE(v, error_decay_lower_bound(model, seq, target, n, eta2).value - 1e-10);
      prev = v;
    }
  }
}

TEST(ErrorDecayBound, TransposeSymmetry) {
  std::mt19937_64 rng(13);
  const SMGModel model = SMGModel::random(6, 5, 2, 1.0, rng);
  const SMGModel flipped{model.v(), model.u(), model.sigma2()};
  const auto seq = random_cells(6, 5, 6, rng);
  std::vector<Entry> tseq;
  for (const auto& e : seq) tseq.push_back(Entry{e.col, e.row});
  const Entry target = ObservationSet(6, 5, seq, Eigen::VectorXd::Zero(6), 0.0).complement().front();
  const double a = error_decay_lower_bound(model, seq, target, 6, 0.01).value;
  const double b = error_decay_lower_bound(flipped, tseq, Entry{target.col, target.row}, 6, 0.01).value;
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(ErrorDecayBound, Errors) {
  std::mt19937_64 rng(14);
  const SMGModel model = SMGModel::random(4, 4, 1, 1.0, rng);
  EXPECT_THROW(error_decay_lower_bound(model, {{0, 0}}, {1, 1}, 2, 0.1), InvalidArgument);
  EXPECT_THROW(error_decay_lower_bound(model, {{0, 0}, {1, 1}}, {1, 1}, 2, 0.1), DomainError);
  EXPECT_THROW(error_decay_lower_bound(model, {{0, 0}, {0, 0}}, {1, 1}, 2, 0.1), IndexError);
}

TEST(FactorCache, ReusesSnapshotFactor) {
  std::mt19937_64 rng(15);
  const SMGModel model = SMGModel::random(6, 6, 2, 1.0, rng);
  const ObservationSet obs = latent_obs(model, random_cells(6, 6, 8, rng), 0.01);
  auto& cache = FactorCache::global();
  cache.clear();
  const std::size_t h0 = cache.hits();
  const std::size_t m0 = cache.misses();
  const ConditionalKernel k1(model, obs);
  const ConditionalKernel k2(model, obs);
  EXPECT_EQ(cache.misses() - m0, 1u);
  EXPECT_EQ(cache.hits() - h0, 1u);
  EXPECT_EQ(&k1.factor(), &k2.factor());
  const ConditionalKernel k3(model.with_sigma2(2.0), obs);
  EXPECT_EQ(cache.misses() - m0, 2u);
}
