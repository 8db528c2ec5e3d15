#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scmrelax/error.hpp"
#include "scmrelax/simulation.hpp"
#include "test_util.hpp"

using namespace scmr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double sample_variance(const VectorXd& x) {
  return (x.array() - x.mean()).matrix().squaredNorm() / static_cast<double>(x.size() - 1);
}

}  // namespace

TEST(Dgp, KModes) {
  EXPECT_EQ(k_for_mode(KMode::kLess, 3), 2);
  EXPECT_EQ(k_for_mode(KMode::kEqual, 3), 3);
  EXPECT_EQ(k_for_mode(KMode::kGreater, 3), 4);
  DgpConfig cfg;
  EXPECT_EQ(cfg.resolved_r(), 3);  // floor(log 50)
  EXPECT_NEAR(cfg.resolved_loading_var(), 1.0, 1e-15);
}

TEST(Dgp, SingleGroupRejected) {
  DgpConfig cfg;
  cfg.k = 1;
  try {
    generate_instance(cfg, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
    EXPECT_EQ(e.context()["field"], "k");
  }
}

TEST(Dgp, Deterministic) {
  DgpConfig cfg;
  const SimulatedInstance a = generate_instance(cfg, 7);
  const SimulatedInstance b = generate_instance(cfg, 7);
  EXPECT_EQ(a.panel.outcomes(), b.panel.outcomes());
  EXPECT_EQ(a.oracle.omega_f_hat, b.oracle.omega_f_hat);
  const SimulatedInstance c = generate_instance(cfg, 8);
  EXPECT_NE(a.panel.outcomes(), c.panel.outcomes());
  // Loadings are structural and shared by every replication.
  EXPECT_EQ(a.loadings, c.loadings);
}

TEST(Dgp, GroupStructureInLoadings) {
  DgpConfig cfg;
  const SimulatedInstance s = generate_instance(cfg, 0);
  const GroupStructure& g = s.oracle.groups;
  EXPECT_EQ(s.w_star_g[0], 0.0);
  EXPECT_NEAR(s.w_star_g.sum(), 1.0, 1e-15);
  for (int i = 0; i < cfg.j; ++i) {
    const int k = g.membership[static_cast<std::size_t>(i)] - 1;
    EXPECT_EQ(s.loadings.row(i + 1), s.oracle.lambda_co.row(k));
  }
  const VectorXd eps = s.loadings.row(0).transpose() - s.oracle.lambda_co.transpose() * s.w_star_g;
  EXPECT_LE(eps.cwiseAbs().maxCoeff(), cfg.resolved_lambda0_noise());
}

TEST(Dgp, ApproximateGroupsPerturbLoadings) {
  DgpConfig cfg;
  cfg.mode = GroupMode::kApproximate;
  const SimulatedInstance s = generate_instance(cfg, 0);
  const MatrixXd base = s.oracle.groups.z_matrix() * s.oracle.lambda_co;
  const double dev = (s.loadings.bottomRows(cfg.j) - base).cwiseAbs().maxCoeff();
  EXPECT_GT(dev, 0.0);
  EXPECT_LE(dev, cfg.resolved_group_noise());
}

TEST(Dgp, LongRunMoments) {
  DgpConfig cfg;
  cfg.j = 3;
  cfg.k = 2;
  cfg.t0 = 99990;
  cfg.t1 = 10;
  cfg.r = 2;
  const SimulatedInstance s = generate_instance(cfg, 0);
  for (int l = 0; l < 2; ++l) {
    EXPECT_NEAR(sample_variance(s.factors.col(l)), 1.0 / (1.0 - 0.25), 0.03 * 4.0 / 3.0);
  }
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(sample_variance(s.errors.col(i)), 1.0, 0.05);
}

TEST(Dgp, OracleFeasibleInExactMode) {
  for (KMode mode : {KMode::kLess, KMode::kEqual}) {
    DgpConfig cfg;
    cfg.k = k_for_mode(mode, cfg.resolved_r());
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      cfg.seed = seed;
      const SimulatedInstance s = generate_instance(cfg, 0);
      try {
        const OracleL2 o = oracle_weights_l2(s.oracle);
        EXPECT_LE(oracle_constraint_residual(s.oracle, o.w_g, o.gamma), 1e-8);
      } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kBoundaryOracle);
      }
    }
  }
}

TEST(Dgp, ConfigErrorsNameTheField) {
  DgpConfig cfg;
  cfg.t0 = 2;
  try {
    cfg.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.context()["field"], "t0");
  }
  cfg = DgpConfig{};
  cfg.j = 1;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Methods, ParseAliases) {
  EXPECT_EQ(parse_method("l2"), Method::kL2Relax);
  EXPECT_EQ(parse_method("EntropyRelax"), Method::kEntropyRelax);
  EXPECT_EQ(parse_method("FSPDA"), Method::kFsPda);
  EXPECT_THROW(parse_method("nope"), Error);
  EXPECT_EQ(all_methods().size(), 7u);
  for (Method m : all_methods()) EXPECT_EQ(parse_method(to_string(m)), m);
}

TEST(Experiment, ScmOnlyIsOne) {
  DgpConfig cfg;
  cfg.j = 20;
  cfg.t0 = 25;
  const ExperimentReport r = run_experiment(cfg, 3, {Method::kScm});
  const MethodSummary& s = r.per_method.at(Method::kScm);
  EXPECT_EQ(s.prediction_ratio, 1.0);
  EXPECT_EQ(s.l1_ratio, 1.0);
  EXPECT_EQ(s.l2_ratio, 1.0);
}

TEST(Experiment, SmokeAllMethods) {
  DgpConfig cfg;
  cfg.t0 = 25;
  const ExperimentReport r = run_experiment(cfg, 2, all_methods());
  EXPECT_EQ(r.methods.size(), 7u);
  for (Method m : r.methods) {
    const MethodSummary& s = r.per_method.at(m);
    EXPECT_TRUE(std::isfinite(s.prediction_ratio)) << to_string(m);
    EXPECT_TRUE(std::isfinite(s.l1_ratio)) << to_string(m);
    EXPECT_TRUE(std::isfinite(s.l2_ratio)) << to_string(m);
    EXPECT_EQ(s.reps.size(), 2u);
  }
  EXPECT_EQ(r.per_method.at(Method::kScm).prediction_ratio, 1.0);
  const std::string csv = r.to_csv();
  EXPECT_EQ(csv.rfind("method,prediction_ratio,l1_ratio,l2_ratio,nonconverged\n", 0), 0u);
  EXPECT_TRUE(r.to_json(true)["per_method"]["L2Relax"].contains("reps"));
}

TEST(Experiment, WorkerCountDoesNotChangeReport) {
  DgpConfig cfg;
  cfg.j = 20;
  cfg.t0 = 25;
  const std::vector<Method> methods = {Method::kScm, Method::kRidge, Method::kL2Relax};
  ExperimentOptions one;
  ExperimentOptions three;
  three.workers = 3;
  const ExperimentReport a = run_experiment(cfg, 4, methods, one);
  const ExperimentReport b = run_experiment(cfg, 4, methods, three);
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_EQ(a.to_json(true).dump(), b.to_json(true).dump());
}

TEST(Risk, PerfectFitIsZero) {
  std::mt19937_64 rng(401);
  const VectorXd w = fixtures::random_simplex(rng, 4);
  const PanelData p = fixtures::exact_combination_panel(rng, w, 10, 5);
  EXPECT_NEAR(empirical_risk(w, p, RiskWindow::kPre), 0.0, 1e-24);
  EXPECT_NEAR(empirical_risk(w, p, RiskWindow::kPost), 0.0, 1e-24);
}

TEST(Risk, ConstantOffset) {
  std::mt19937_64 rng(409);
  MatrixXd y = fixtures::normal_matrix(rng, 9, 3);
  y.col(1) = y.col(0).array() + 1.0;
  VectorXd e1 = VectorXd::Zero(2);
  e1[0] = 1.0;
  EXPECT_NEAR(empirical_risk(e1, PanelData::from_matrix(y, 6), RiskWindow::kPre), 1.0, 1e-14);
}

TEST(Risk, MatchesLoop) {
  std::mt19937_64 rng(419);
  const PanelData p = fixtures::random_panel(rng, 3, 6, 4);
  const VectorXd w = fixtures::random_simplex(rng, 3);
  double pre = 0.0;
  for (int t = 0; t < 6; ++t) {
    double fit = 0.0;
    for (int j = 0; j < 3; ++j) fit += w[j] * p.outcomes()(t, j + 1);
    pre += (fit - p.outcomes()(t, 0)) * (fit - p.outcomes()(t, 0));
  }
  EXPECT_NEAR(empirical_risk(w, p, RiskWindow::kPre), pre / 6.0, 1e-14);
  EXPECT_THROW(empirical_risk(VectorXd::Ones(2), p, RiskWindow::kPre), Error);
}
