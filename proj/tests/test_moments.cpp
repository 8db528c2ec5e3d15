#include <gtest/gtest.h>

#include <random>

#include "scmrelax/moments.hpp"
#include "test_util.hpp"

using namespace scmr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST(Moments, IdentityBlock) {
  MatrixXd y(2, 3);
  y << 1, 1, 0, 1, 0, 1;
  const MomentPair m = compute_moments(PanelData::from_matrix(y, 2));
  EXPECT_LE((m.sigma_hat - 0.5 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(m.upsilon_hat[0], 0.5);
  EXPECT_DOUBLE_EQ(m.upsilon_hat[1], 0.5);
}

TEST(Moments, ZeroControls) {
  MatrixXd y = MatrixXd::Zero(4, 3);
  y.col(0) << 1, 2, 3, 4;
  const MomentPair m = compute_moments(PanelData::from_matrix(y, 3));
  EXPECT_EQ(m.sigma_hat, MatrixXd::Zero(2, 2));
  EXPECT_EQ(m.upsilon_hat, VectorXd::Zero(2));
}

TEST(Moments, MatchesNaiveLoop) {
  std::mt19937_64 rng(17);
  const PanelData p = fixtures::random_panel(rng, 3, 5, 2);
  const MomentPair m = compute_moments(p);
  const MatrixXd& y = p.outcomes();
  for (int a = 0; a < 3; ++a) {
    double u = 0.0;
    for (int t = 0; t < 5; ++t) u += y(t, a + 1) * y(t, 0);
    EXPECT_NEAR(m.upsilon_hat[a], u / 5.0, 1e-14);
    for (int b = 0; b < 3; ++b) {
      double s = 0.0;
      for (int t = 0; t < 5; ++t) s += y(t, a + 1) * y(t, b + 1);
      EXPECT_NEAR(m.sigma_hat(a, b), s / 5.0, 1e-14);
    }
  }
  EXPECT_EQ(m.t0, 5);
  EXPECT_NO_THROW(m.validate());
}

TEST(EtaBar, TwoVector) {
  MomentPair m;
  m.j = 2;
  m.t0 = 2;
  m.sigma_hat = MatrixXd::Zero(2, 2);
  m.upsilon_hat = Eigen::Vector2d(-1.0, -3.0);  // v = (1, 3)
  const EtaBar e = eta_bar(m);
  EXPECT_DOUBLE_EQ(e.eta_bar, 1.0);
  EXPECT_DOUBLE_EQ(e.gamma, -2.0);
}

TEST(EtaBar, ConstantV) {
  MomentPair m;
  m.j = 3;
  m.t0 = 2;
  m.sigma_hat = MatrixXd::Identity(3, 3);
  m.upsilon_hat = VectorXd::Constant(3, 0.2);
  EXPECT_DOUBLE_EQ(eta_bar(m).eta_bar, 0.0);
}

TEST(EtaBar, MatchesGammaGridSearch) {
  std::mt19937_64 rng(23);
  const MomentPair m = fixtures::random_moments(rng, 6);
  const VectorXd v = m.sigma_hat * VectorXd::Constant(6, 1.0 / 6.0) - m.upsilon_hat;
  double best = 1e300;
  for (long i = 0; i <= 2000000; ++i) {
    const double g = -10.0 + 1e-5 * static_cast<double>(i);
    best = std::min(best, (v.array() + g).abs().maxCoeff());
  }
  EXPECT_NEAR(eta_bar(m).eta_bar, best, 1e-4);
}

TEST(MomentScale, LargestEntry) {
  MomentPair m;
  m.j = 2;
  m.t0 = 2;
  m.sigma_hat = (MatrixXd(2, 2) << 1, -4, -4, 2).finished();
  m.upsilon_hat = Eigen::Vector2d(3, 0.5);
  EXPECT_DOUBLE_EQ(moment_scale(m), 4.0);
}
