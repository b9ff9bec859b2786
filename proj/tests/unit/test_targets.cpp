#include <gtest/gtest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "agal/error.hpp"
#include "agal/targets.hpp"
#include "test_support.hpp"

using namespace agal;
using agal::testing::random_spd;
using agal::testing::random_vector;

namespace {

Vector unit_sum(const Vector& v) { return v / v.sum(); }

double max_abs(const Vector& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Targets, ContinuumSpecialCases) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 3 + trial;
    const Matrix m = random_spd(n, rng);
    const SpectralCovariance cov = SpectralCovariance::from_matrix(m);
    const Vector sigma = m.diagonal().cwiseSqrt();
    const Vector caps = random_vector(n, rng).cwiseAbs().array() + 0.1;
    const Vector ones = Vector::Ones(n);
    const Matrix inv = m.inverse();
    const Matrix root_inv = Eigen::SelfAdjointEigenSolver<Matrix>(m).operatorInverseSqrt();

    const auto w = [&](double a, double b, double c) { return continuum_target(cov, sigma, caps, a, b, c).weights; };
    EXPECT_LT(max_abs(w(0, 0, 0) - ones / static_cast<double>(n)), 1e-10);
    EXPECT_LT(max_abs(w(0, -1, 0) - unit_sum(sigma.cwiseInverse())), 1e-10);
    EXPECT_LT(max_abs(w(0, 0, 1) - unit_sum(caps)), 1e-10);
    EXPECT_LT(max_abs(w(1, 0, 0) - unit_sum(inv * ones)), 1e-10);
    EXPECT_LT(max_abs(w(1, 1, 0) - unit_sum(inv * sigma)), 1e-10);
    EXPECT_LT(max_abs(w(0.5, 0, 0) - unit_sum(root_inv * ones)), 1e-10);
  }
}

TEST(Targets, NamedMethodsAgreeWithContinuum) {
  std::mt19937_64 rng(8);
  const Matrix m = random_spd(6, rng);
  const SpectralCovariance cov = SpectralCovariance::from_matrix(m);
  const Vector sigma = cov.volatilities();
  const Vector caps = Vector::LinSpaced(6, 1.0, 6.0);
  const auto same = [&](TargetKind kind, double a, double b, double c) {
    const Vector named = named_target(TargetSpec::named(kind), cov, sigma, caps).weights;
    EXPECT_LT(max_abs(named - continuum_target(cov, sigma, caps, a, b, c).weights), 1e-12);
  };
  same(TargetKind::mvp, 1, 0, 0);
  same(TargetKind::mdp, 1, 1, 0);
  same(TargetKind::aap, 0.5, 0, 0);
  same(TargetKind::equal_weight, 0, 0, 0);
  same(TargetKind::equal_vol, 0, -1, 0);
  same(TargetKind::market_cap, 0, 0, 1);
}

TEST(Targets, RiskContributionsSumToVariance) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = random_spd(5, rng);
    const SpectralCovariance cov = SpectralCovariance::from_matrix(m);
    const double a = 0.1 * trial / 2.0;
    const TargetPortfolio t = continuum_target(cov, Vector(), Vector(), a, 0, 0);
    EXPECT_NEAR(t.weights.sum(), 1.0, 1e-12);
    EXPECT_NEAR(t.risk_contributions.sum(), t.weights.dot(m * t.weights), 1e-12);
  }
}

TEST(Targets, AapEqualizesModeRiskForUniformProjections) {
  // With 1 having equal overlap with every mode, AAP spreads risk evenly.
  Vector lambda(4);
  lambda << 4, 2, 1, 0.5;
  // Columns of 11'/2 - I are orthonormal and each sums to one.
  const Matrix h = Matrix::Constant(4, 4, 0.5) - Matrix::Identity(4, 4);
  const auto cov = SpectralCovariance::from_spectrum(lambda, h, CleaningTag::raw);
  const TargetPortfolio t = named_target(TargetSpec::named(TargetKind::aap), cov, Vector(), Vector());
  const Vector rc = t.risk_contributions;
  EXPECT_LT((rc.array() - rc.mean()).abs().maxCoeff(), 1e-12);
}

TEST(Targets, SparseAapWithAllModesIsAap) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const SpectralCovariance cov = SpectralCovariance::from_matrix(random_spd(8, rng));
    const Vector aap = named_target(TargetSpec::named(TargetKind::aap), cov, Vector(), Vector()).weights;
    EXPECT_LT(max_abs(sparse_aap_target(cov, 1.0).weights - aap), 1e-10);
  }
  EXPECT_EQ(k_star(250, 0.05), 13);
  EXPECT_EQ(k_star(10, 0.01), 1);
}

TEST(Targets, SparseAapUsesLeadingModesOnly) {
  std::mt19937_64 rng(11);
  const SpectralCovariance cov = SpectralCovariance::from_matrix(random_spd(10, rng));
  const TargetPortfolio t = sparse_aap_target(cov, 0.3);
  const Vector proj = cov.eigenvectors().transpose() * t.weights;
  for (Index k = 3; k < 10; ++k) EXPECT_NEAR(proj(k), 0.0, 1e-12);
}

TEST(Targets, ErcEqualizesContributions) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix m = random_spd(6, rng);
    const Vector w = erc_weights(SpectralCovariance::from_matrix(m));
    EXPECT_NEAR(w.sum(), 1.0, 1e-12);
    EXPECT_GT(w.minCoeff(), 0.0);
    const Vector rc = w.cwiseProduct(m * w);
    EXPECT_LT((rc.array() / rc.mean() - 1.0).abs().maxCoeff(), 1e-8);
  }
}

TEST(Targets, ResidualProjectionIsADistribution) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const SpectralCovariance cov = SpectralCovariance::from_matrix(random_spd(7, rng));
    const Vector p = residual_projection(cov);
    EXPECT_EQ(p(0), 0.0);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_GE(p.minCoeff(), 0.0);
  }
  // Uniform predictor aligned with the top mode leaves no residual.
  Matrix h(2, 2);
  h << 1, 1, 1, -1;
  h /= std::sqrt(2.0);
  Vector lambda(2);
  lambda << 2, 1;
  EXPECT_THROW(residual_projection(SpectralCovariance::from_spectrum(lambda, h, CleaningTag::raw)), Error);
}

TEST(Targets, TwoAssetSpreadShare) {
  for (double rho : {-0.5, 0.0, 0.3, 0.9}) {
    EXPECT_NEAR(two_asset_spread_share(rho, 1.0), (1.0 + rho) / 2.0, 1e-12);
    EXPECT_NEAR(two_asset_spread_share(rho, 0.5), 0.5, 1e-12);
  }
  EXPECT_THROW(two_asset_spread_share(1.0, 1.0), Error);
}

TEST(Targets, SpecParsingAndNames) {
  EXPECT_EQ(TargetSpec::parse("aap").kind, TargetKind::aap);
  EXPECT_EQ(TargetSpec::parse("S-AAP").kind, TargetKind::sparse_aap);
  EXPECT_EQ(TargetSpec::parse("1/n").kind, TargetKind::equal_weight);
  EXPECT_EQ(TargetSpec::named(TargetKind::mvp).name(), "MVP");
  EXPECT_EQ(TargetSpec::named(TargetKind::equal_weight).name(), "1/N");
  EXPECT_THROW(TargetSpec::parse("nonsense"), Error);
}

TEST(Targets, ZeroNetExposureIsDegenerate) {
  Matrix h(2, 2);
  h << 1, 1, 1, -1;
  h /= std::sqrt(2.0);
  Vector lambda(2);
  lambda << 2, 1;
  const auto cov = SpectralCovariance::from_spectrum(lambda, h, CleaningTag::raw);
  Vector p(2);
  p << 1, -1;
  EXPECT_THROW(predictor_target(cov, p, 1.0), Error);
}
