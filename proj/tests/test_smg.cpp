#include "amc/smg.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace amc;
using amc::testing::dense_conditional;
using amc::testing::kron_block;
using amc::testing::random_cells;

TEST(ProjectionFromBasis, AxisAligned) {
  const ProjectionMatrix p = projection_from_basis(Eigen::MatrixXd(Eigen::Vector2d(1, 0)));
  EXPECT_DOUBLE_EQ(p.matrix()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p.matrix()(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(p.matrix()(1, 1), 0.0);
  EXPECT_EQ(p.rank(), 1);
}

TEST(ProjectionFromBasis, Diagonal) {
  const double s = 1.0 / std::sqrt(2.0);
  const ProjectionMatrix p = projection_from_basis(Eigen::MatrixXd(Eigen::Vector2d(s, s)));
  EXPECT_NEAR((p.matrix() - Eigen::MatrixXd::Constant(2, 2, 0.5)).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(ProjectionFromBasis, RandomBasisSatisfiesInvariants) {
  std::mt19937_64 rng(3);
  const ProjectionMatrix p = projection_from_basis(SubspaceBasis(uniform_stiefel(5, 2, rng)));
  EXPECT_NEAR(p.matrix().trace(), 2.0, 1e-10);
  EXPECT_LT((p.matrix() * p.matrix() - p.matrix()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((p.matrix() - p.matrix().transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NO_THROW(ProjectionMatrix::from_matrix(p.matrix()));
}

TEST(ProjectionFromBasis, RejectsNonOrthonormal) {
  Eigen::MatrixXd b(3, 2);
  b << 1, 1, 0, 1, 0, 0;
  EXPECT_THROW(projection_from_basis(b), InvalidBasis);
  EXPECT_THROW(projection_from_basis(Eigen::MatrixXd(Eigen::Vector2d(1.0, 1e-2))), InvalidBasis);
}

TEST(ProjectionMatrix, BasisRecoversRange) {
  std::mt19937_64 rng(4);
  const SubspaceBasis u(uniform_stiefel(6, 3, rng));
  const ProjectionMatrix p = projection_from_basis(u);
  EXPECT_LT((projection_from_basis(p.basis()).matrix() - p.matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SMGModel, RankMustBeBelowDimensions) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(SMGModel::random(3, 3, 3, 1.0, rng), InvalidArgument);
  EXPECT_THROW(SMGModel::random(4, 3, 3, 1.0, rng), InvalidArgument);
  EXPECT_THROW(SMGModel::random(4, 4, 2, 0.0, rng), InvalidArgument);
  EXPECT_NO_THROW(SMGModel::random(4, 3, 2, 1.0, rng));
}

TEST(SampleSmg, SpikeHasSingleNonzero) {
  const Eigen::MatrixXd e1 = Eigen::MatrixXd::Identity(3, 1);
  const SMGModel model{SubspaceBasis(e1), SubspaceBasis(e1), 1.0};
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    Eigen::MatrixXd x = sample_smg(model, rng);
    EXPECT_NE(x(0, 0), 0.0);
    x(0, 0) = 0.0;
    EXPECT_EQ(x.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(SampleSmg, MembershipOverThousandDraws) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 1000; ++t) {
    const SMGModel model = SMGModel::random(5 + t % 3, 4 + t % 4, 1 + t % 3, 0.5 + t % 5, rng);
    const Eigen::MatrixXd x = sample_smg(model, rng);
    const Eigen::MatrixXd proj = model.pu().matrix() * x * model.pv().matrix();
    ASSERT_LT((proj - x).cwiseAbs().maxCoeff(), 1e-8);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(x);
    ASSERT_LT(svd.singularValues()(model.rank()), 1e-8 * std::max(1.0, svd.singularValues()(0)));
  }
}

TEST(SampleSmg, MomentsMatchEntrywiseVariance) {
  std::mt19937_64 rng(21);
  const SMGModel model = SMGModel::random(7, 7, 2, 1.0, rng);
  const int n = 10000;
  Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(7, 7);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(7, 7);
  Eigen::MatrixXd s4 = Eigen::MatrixXd::Zero(7, 7);
  for (int t = 0; t < n; ++t) {
    const Eigen::MatrixXd x = sample_smg(model, rng);
    s1 += x;
    s2 += x.cwiseProduct(x);
    s4 += x.cwiseProduct(x).cwiseProduct(x.cwiseProduct(x));
  }
  const auto& u = model.u().matrix();
  const auto& v = model.v().matrix();
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 7; ++j) {
      const double var = model.sigma2() * u.row(i).squaredNorm() * v.row(j).squaredNorm();
      const double mean = s1(i, j) / n;
      EXPECT_LE(std::abs(mean), 4.0 * std::sqrt(var / n) + 1e-12);
      const double m2 = s2(i, j) / n;
      const double se = std::sqrt((s4(i, j) / n - m2 * m2) / n);
      EXPECT_LE(std::abs(m2 - var), 5.0 * se + 1e-12) << i << "," << j;
    }
  }
}

TEST(SampleSmg, VectorizedCovarianceIsKronecker) {
  std::mt19937_64 rng(5);
  const SMGModel model = SMGModel::random(3, 3, 1, 2.0, rng);
  const Eigen::MatrixXd target = model.sigma2() * kron_block(model);
  const int n = 100000;
  const int d = 9;
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd s4 = Eigen::MatrixXd::Zero(d, d);
  for (int t = 0; t < n; ++t) {
    const Eigen::MatrixXd x = sample_smg(model, rng);
    const Eigen::Map<const Eigen::VectorXd> vx(x.data(), d);
    const Eigen::MatrixXd outer = vx * vx.transpose();
    s2 += outer;
    s4 += outer.cwiseProduct(outer);
  }
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      const double m = s2(a, b) / n;
      const double se = std::sqrt(std::max(s4(a, b) / n - m * m, 0.0) / n);
      EXPECT_LE(std::abs(m - target(a, b)), 5.0 * se + 1e-12) << a << "," << b;
    }
  }
}

TEST(SmgLogDensity, ZeroMatrix) {
  std::mt19937_64 rng(2);
  const SMGModel model = SMGModel::random(5, 4, 2, 1.7, rng);
  EXPECT_NEAR(smg_log_density(Eigen::MatrixXd::Zero(5, 4), model), -2.0 * std::log(2.0 * std::numbers::pi * 1.7),
              1e-14);
}

TEST(SmgLogDensity, UnitRankOne) {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd u = uniform_stiefel(4, 1, rng);
  const Eigen::MatrixXd v = uniform_stiefel(3, 1, rng);
  const SMGModel model{SubspaceBasis(u), SubspaceBasis(v), 1.0};
  EXPECT_NEAR(smg_log_density(u * v.transpose(), model), -0.5 * std::log(2.0 * std::numbers::pi) - 0.5, 1e-12);
}

TEST(SmgLogDensity, FrobeniusIdentityOnRandomDraws) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    const SMGModel model = SMGModel::random(6, 5, 1 + t % 3, 0.3 + t, rng);
    const Eigen::MatrixXd x = sample_smg(model, rng);
    const double r = static_cast<double>(model.rank());
    const double expect = -0.5 * r * r * std::log(2.0 * std::numbers::pi * model.sigma2()) -
                          x.squaredNorm() / (2.0 * model.sigma2());
    EXPECT_NEAR(smg_log_density(x, model), expect, 1e-10);
  }
}

TEST(SmgLogDensity, RejectsMatrixOutsideSupport) {
  std::mt19937_64 rng(9);
  const SMGModel model = SMGModel::random(5, 5, 2, 1.0, rng);
  EXPECT_THROW(smg_log_density(Eigen::MatrixXd::Identity(5, 5), model), DomainError);
  EXPECT_THROW(smg_log_density(Eigen::MatrixXd::Zero(4, 5), model), DomainError);
}

TEST(ObserveEntries, NoiselessIsExact) {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 3);
  const ObservationSet obs = observe_entries(x, {{0, 0}, {3, 2}, {1, 1}}, 0.0, rng);
  EXPECT_EQ(obs.values()(0), x(0, 0));
  EXPECT_EQ(obs.values()(1), x(3, 2));
  EXPECT_EQ(obs.values()(2), x(1, 1));
}

TEST(ObserveEntries, EmptyAndInvalid) {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 3);
  EXPECT_TRUE(observe_entries(x, {}, 0.1, rng).empty());
  EXPECT_THROW(observe_entries(x, {{0, 0}, {0, 0}}, 0.1, rng), IndexError);
  EXPECT_THROW(observe_entries(x, {{3, 0}}, 0.1, rng), IndexError);
  EXPECT_THROW(observe_entries(x, {{0, -1}}, 0.1, rng), IndexError);
}

TEST(ObserveEntries, NoiseVarianceMatches) {
  std::mt19937_64 rng(17);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 2);
  const int n = 100000;
  double s2 = 0.0;
  double s4 = 0.0;
  for (int t = 0; t < n; ++t) {
    const ObservationSet obs = observe_entries(x, {{1, 0}}, 1e-4, rng);
    const double e = obs.values()(0) - x(1, 0);
    s2 += e * e;
    s4 += e * e * e * e;
  }
  const double m = s2 / n;
  const double se = std::sqrt((s4 / n - m * m) / n);
  EXPECT_LE(std::abs(m - 1e-4), 5.0 * se);
}

TEST(CovarianceBlock, SingleEntryIsCoherenceProduct) {
  std::mt19937_64 rng(7);
  const SMGModel model = SMGModel::random(6, 5, 2, 1.0, rng);
  const Eigen::MatrixXd k = build_covariance_block(model, std::vector<Entry>{{2, 3}});
  EXPECT_NEAR(k(0, 0), model.u().matrix().row(2).squaredNorm() * model.v().matrix().row(3).squaredNorm(), 1e-15);
}

TEST(CovarianceBlock, ConstantCoherence) {
  const double s = 1.0 / std::sqrt(2.0);
  const SubspaceBasis b(Eigen::MatrixXd(Eigen::Vector2d(s, s)));
  const SMGModel model(b, b, 1.0);
  const Eigen::MatrixXd k = build_covariance_block(model, std::vector<Entry>{{0, 0}, {1, 0}, {1, 1}});
  EXPECT_LT((k - Eigen::MatrixXd::Constant(3, 3, 0.25)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CovarianceBlock, MatchesProjectedMaskInnerProducts) {
  std::mt19937_64 rng(12);
  const SMGModel model = SMGModel::random(6, 7, 3, 1.0, rng);
  const auto cells = random_cells(6, 7, 5, rng);
  const Eigen::MatrixXd k = build_covariance_block(model, cells);
  const Eigen::MatrixXd pu = model.pu().matrix();
  const Eigen::MatrixXd pv = model.pv().matrix();
  for (std::size_t a = 0; a < cells.size(); ++a) {
    for (std::size_t b = 0; b < cells.size(); ++b) {
      Eigen::MatrixXd ma = Eigen::MatrixXd::Zero(6, 7);
      Eigen::MatrixXd mb = Eigen::MatrixXd::Zero(6, 7);
      ma(cells[a].row, cells[a].col) = 1.0;
      mb(cells[b].row, cells[b].col) = 1.0;
      const double ip = (pu * ma * pv).cwiseProduct(pu * mb * pv).sum();
      EXPECT_NEAR(k(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)), ip, 1e-10);
    }
  }
}

TEST(CovarianceBlock, KroneckerConsistencyAndPsd) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 200; ++t) {
    const Eigen::Index m1 = 2 + t % 7;
    const Eigen::Index m2 = 2 + (t / 7) % 7;
    const Eigen::Index r = 1 + t % (std::min(m1, m2) - 1);
    const SMGModel model = SMGModel::random(m1, m2, r, 1.0, rng);
    const auto n = std::min<Eigen::Index>(m1 * m2, 1 + t % 15);
    const auto cells = random_cells(m1, m2, n, rng);
    const Eigen::MatrixXd k = build_covariance_block(model, cells);
    if (m1 * m2 <= 64) {
      const Eigen::MatrixXd full = kron_block(model);
      for (std::size_t a = 0; a < cells.size(); ++a)
        for (std::size_t b = 0; b < cells.size(); ++b)
          ASSERT_NEAR(k(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)),
                      full(cells[a].row + cells[a].col * m1, cells[b].row + cells[b].col * m1), 1e-12);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::EigenvaluesOnly);
    ASSERT_GE(es.eigenvalues().minCoeff(), -1e-8);
  }
}

TEST(ConditionalPosterior, NoObservationsIsPrior) {
  std::mt19937_64 rng(14);
  const SMGModel model = SMGModel::random(5, 5, 2, 2.5, rng);
  const std::vector<Entry> targets{{0, 1}, {3, 4}};
  const auto post = conditional_posterior(model, ObservationSet::empty(5, 5, 0.1), targets);
  EXPECT_EQ(post.mean.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT((post.covariance - 2.5 * build_covariance_block(model, targets)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_DOUBLE_EQ(post.gamma2, 0.1 / 2.5);
}

TEST(ConditionalPosterior, SingleObservationSchurComplement) {
  std::mt19937_64 rng(15);
  const SMGModel model = SMGModel::random(5, 4, 2, 1.3, rng);
  const ObservationSet obs(5, 4, {{1, 2}}, Eigen::VectorXd::Constant(1, 0.7), 0.05);
  const auto post = conditional_posterior(model, obs, {{3, 0}});
  const auto& u = model.u().matrix();
  const auto& v = model.v().matrix();
  const double g2 = 0.05 / 1.3;
  const double mu_kl = u.row(3).squaredNorm() * v.row(0).squaredNorm();
  const double mu_ij = u.row(1).squaredNorm() * v.row(2).squaredNorm();
  const double nu = u.row(1).dot(u.row(3)) * v.row(2).dot(v.row(0));
  EXPECT_NEAR(post.covariance(0, 0), 1.3 * (mu_kl - nu * nu / (mu_ij + g2)), 1e-13);
  EXPECT_NEAR(post.mean(0), nu * 0.7 / (mu_ij + g2), 1e-13);
}

TEST(ConditionalPosterior, MatchesDenseJointGaussian) {
  std::mt19937_64 rng(16);
  for (int t = 0; t < 20; ++t) {
    const SMGModel model = SMGModel::random(5, 5, 2, 0.8 + t * 0.1, rng);
    auto cells = random_cells(5, 5, 9, rng);
    const std::vector<Entry> obs_cells(cells.begin(), cells.begin() + 6);
    const std::vector<Entry> targets(cells.begin() + 6, cells.end());
    const Eigen::MatrixXd x = sample_smg(model, rng);
    const ObservationSet obs = observe_entries(x, obs_cells, 0.01, rng);
    const auto post = conditional_posterior(model, obs, targets);
    const auto oracle = dense_conditional(model, obs, targets);
    EXPECT_LT((post.mean - oracle.mean).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((post.covariance - oracle.covariance).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((post.covariance - post.covariance.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(post.covariance, Eigen::EigenvaluesOnly);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
    const Eigen::MatrixXd prior = model.sigma2() * build_covariance_block(model, targets);
    for (Eigen::Index k = 0; k < prior.rows(); ++k) EXPECT_LE(post.covariance(k, k), prior(k, k) + 1e-10);
  }
}

TEST(ConditionalPosterior, NoiselessSingularSystemIsReported) {
  std::mt19937_64 rng(18);
  const SMGModel model = SMGModel::random(5, 5, 1, 1.0, rng);
  const auto cells = random_cells(5, 5, 4, rng);
  const ObservationSet obs(5, 5, cells, Eigen::VectorXd::Ones(4), 0.0);
  try {
    conditional_posterior(model, obs, {obs.complement().front()});
    FAIL() << "expected an ill-conditioned error";
  } catch (const IllConditioned& e) {
    EXPECT_GT(e.condition_estimate(), 1e12);
  }
}

TEST(ConditionalPosterior, RejectsObservedTarget) {
  std::mt19937_64 rng(19);
  const SMGModel model = SMGModel::random(4, 4, 1, 1.0, rng);
  const ObservationSet obs(4, 4, {{0, 0}}, Eigen::VectorXd::Ones(1), 0.1);
  EXPECT_THROW(conditional_posterior(model, obs, {{0, 0}}), DomainError);
}

TEST(SampleConditionalMatrix, MomentsMatchClosedForm) {
  std::mt19937_64 rng(20);
  const SMGModel model = SMGModel::random(4, 4, 2, 1.0, rng);
  const Eigen::MatrixXd x = sample_smg(model, rng);
  const ObservationSet obs = observe_entries(x, {{0, 0}, {1, 2}, {2, 1}, {3, 3}, {0, 3}}, 0.05, rng);
  const std::vector<Entry> targets{{1, 1}, {2, 3}, {3, 0}};
  const auto post = conditional_posterior(model, obs, targets);
  const int n = 40000;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(3, 3);
  for (int t = 0; t < n; ++t) {
    const Eigen::MatrixXd draw = sample_conditional_matrix(model, obs, rng);
    ASSERT_LT(support_residual(draw, model), 1e-10);
    Eigen::Vector3d z;
    for (int k = 0; k < 3; ++k) z(k) = draw(targets[k].row, targets[k].col);
    s1 += z;
    s2 += z * z.transpose();
  }
  const Eigen::VectorXd mean = s1 / n;
  const Eigen::MatrixXd cov = s2 / n - mean * mean.transpose();
  for (int k = 0; k < 3; ++k) {
    const double sd = std::sqrt(post.covariance(k, k));
    EXPECT_LE(std::abs(mean(k) - post.mean(k)), 5.0 * sd / std::sqrt(n) + 1e-12);
    EXPECT_LE(std::abs(cov(k, k) - post.covariance(k, k)), 5.0 * post.covariance(k, k) * std::sqrt(2.0 / n) + 1e-12);
  }
}
