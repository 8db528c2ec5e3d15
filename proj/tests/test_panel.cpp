#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "scmrelax/error.hpp"
#include "scmrelax/panel.hpp"
#include "test_util.hpp"

using namespace scmr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected scmr::Error";
  return ErrorCode::kInvalidArgument;
}

const char* kSmallCsv =
    "time,A,B,C\n"
    "1,1.0,2.0,3.0\n"
    "2,1.5,2.5,3.5\n"
    "3,2.0,3.0,4.0\n"
    "4,2.5,3.5,4.5\n";

}  // namespace

TEST(Panel, ParsesSmallCsv) {
  const PanelData p = parse_panel_csv(kSmallCsv, "B", "3");
  EXPECT_EQ(p.t0(), 2);
  EXPECT_EQ(p.t1(), 2);
  EXPECT_EQ(p.num_controls(), 2);
  EXPECT_EQ(p.unit_labels()[0], "B");
  EXPECT_DOUBLE_EQ(p.treated()[0], 2.0);
  EXPECT_DOUBLE_EQ(p.controls()(1, 0), 1.5);  // A
  EXPECT_DOUBLE_EQ(p.controls()(3, 1), 4.5);  // C
}

TEST(Panel, LoadFromFileMatchesParse) {
  const auto path = std::filesystem::temp_directory_path() / "scmr_panel_test.csv";
  std::ofstream(path) << kSmallCsv;
  const PanelData a = load_panel_csv(path, "A", "3");
  const PanelData b = parse_panel_csv(kSmallCsv, "A", "3");
  EXPECT_EQ(a.outcomes(), b.outcomes());
  std::filesystem::remove(path);
}

TEST(Panel, MissingUnitAndTime) {
  EXPECT_EQ(code_of([] { parse_panel_csv(kSmallCsv, "Z", "3"); }), ErrorCode::kMissingUnit);
  EXPECT_EQ(code_of([] { parse_panel_csv(kSmallCsv, "A", "9"); }), ErrorCode::kMissingTime);
}

TEST(Panel, NonNumericCellReportsPosition) {
  const std::string csv = "time,A,B\n1,1,2\n2,abc,3\n3,1,2\n";
  try {
    parse_panel_csv(csv, "A", "3");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonNumericCell);
    EXPECT_EQ(e.context()["row"], 2);
    EXPECT_EQ(e.context()["col"], 1);
  }
}

TEST(Panel, TooFewPreperiods) {
  EXPECT_EQ(code_of([] { parse_panel_csv(kSmallCsv, "A", "2"); }), ErrorCode::kTooFewPeriods);
}

TEST(Panel, MissingFileIsIo) {
  EXPECT_EQ(code_of([] { load_panel_csv("/nonexistent/x.csv", "A", "3"); }), ErrorCode::kIo);
}

TEST(Panel, CsvRoundTrip) {
  std::mt19937_64 rng(3);
  const PanelData p = fixtures::random_panel(rng, 4, 6, 3);
  const PanelData q = parse_panel_csv(to_csv(p), p.unit_labels()[0], p.time_labels()[6]);
  EXPECT_LE((p.outcomes() - q.outcomes()).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(YoyGrowth, ConstantSeriesIsZero) {
  MatrixXd levels = MatrixXd::Constant(5, 1, 5.0);
  const MatrixXd g = yoy_growth(levels, 4);
  ASSERT_EQ(g.rows(), 1);
  EXPECT_DOUBLE_EQ(g(0, 0), 0.0);
}

TEST(YoyGrowth, TenPercent) {
  MatrixXd levels(5, 1);
  levels << 100, 101, 102, 103, 110;
  EXPECT_NEAR(yoy_growth(levels, 4)(0, 0), 0.10, 1e-15);
}

TEST(YoyGrowth, ZeroBase) {
  MatrixXd levels(5, 1);
  levels << 1, 0, 1, 1, 1;
  EXPECT_EQ(code_of([&] { yoy_growth(levels, 1); }), ErrorCode::kZeroBase);
}

TEST(YoyGrowth, PanelShiftsClock) {
  std::mt19937_64 rng(5);
  MatrixXd y = fixtures::normal_matrix(rng, 12, 3).array().abs() + 1.0;
  const PanelData p = PanelData::from_matrix(y, 8);
  const PanelData g = yoy_growth(p, 4);
  EXPECT_EQ(g.t0(), 4);
  EXPECT_EQ(g.t1(), 4);
  EXPECT_EQ(g.time_labels()[0], p.time_labels()[4]);
  EXPECT_NEAR(g.outcomes()(2, 1), y(6, 1) / y(2, 1) - 1.0, 1e-15);
}

TEST(Standardize, TwoPointVariance) {
  MatrixXd y(3, 2);
  y << 1, 0, 3, 2, 5, 7;
  const auto [s, scales] = standardize(PanelData::from_matrix(y, 2));
  EXPECT_NEAR(scales.sigma[0], std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(s.outcomes()(1, 1), 2.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(s.outcomes()(2, 1), 7.0 / std::sqrt(2.0), 1e-15);
}

TEST(Standardize, UnitVarianceUnchanged) {
  MatrixXd y(3, 2);
  y << 0, 1, 1, 0, 4, 4;  // pre columns (0,1) and (1,0) have sd 1/sqrt(2)
  y.topRows(2) *= std::sqrt(2.0);
  const auto [s, scales] = standardize(PanelData::from_matrix(y, 2));
  EXPECT_NEAR(scales.sigma0, 1.0, 1e-15);
  EXPECT_NEAR(scales.sigma[0], 1.0, 1e-15);
  EXPECT_LE((s.outcomes() - y).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Standardize, ConstantColumnIsDegenerate) {
  MatrixXd y(3, 2);
  y << 1, 2, 3, 2, 5, 7;
  EXPECT_EQ(code_of([&] { standardize(PanelData::from_matrix(y, 2)); }), ErrorCode::kDegenerateSeries);
}

TEST(Destandardize, Arithmetic) {
  ScaleVector s;
  s.sigma0 = 2.0;
  s.sigma = Eigen::Vector2d(4.0, 1.0);
  const VectorXd w = destandardize_weights(Eigen::Vector2d(1.0, 0.0), s);
  EXPECT_DOUBLE_EQ(w[0], 0.5);
  EXPECT_DOUBLE_EQ(w[1], 0.0);

  s.sigma0 = 3.0;
  s.sigma = Eigen::Vector3d::Constant(3.0);
  const VectorXd v = destandardize_weights(Eigen::Vector3d(0.2, 0.3, 0.5), s);
  EXPECT_NEAR(v.sum(), 1.0, 1e-15);

  EXPECT_EQ(code_of([&] { destandardize_weights(Eigen::Vector2d(0.5, 0.5), s); }),
            ErrorCode::kDimensionMismatch);
}

TEST(Destandardize, FitIsScaleEquivariant) {
  // Weights fitted on standardized data reproduce the same raw-scale fit.
  std::mt19937_64 rng(9);
  const PanelData p = fixtures::random_panel(rng, 3, 10, 0);
  const auto [s, scales] = standardize(p);
  const VectorXd ws = fixtures::random_simplex(rng, 3);
  const VectorXd w = destandardize_weights(ws, scales);
  const VectorXd fit_std = s.controls() * ws * scales.sigma0;
  EXPECT_LE((p.controls() * w - fit_std).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ReconstructLevels, FixedPoint) {
  const VectorXd obs = VectorXd::Constant(8, 100.0);
  const VectorXd lv = reconstruct_levels(VectorXd::Zero(4), obs, 4, 4);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(lv[i], 100.0);
}

TEST(ReconstructLevels, Compounding) {
  const VectorXd obs = VectorXd::Constant(2, 100.0);
  const VectorXd lv = reconstruct_levels(VectorXd::Constant(3, 0.1), obs, 2, 1);
  EXPECT_NEAR(lv[0], 110.0, 1e-12);
  EXPECT_NEAR(lv[1], 121.0, 1e-12);
  EXPECT_NEAR(lv[2], 133.1, 1e-12);
}

TEST(ReconstructLevels, InsufficientHistory) {
  EXPECT_EQ(code_of([] { reconstruct_levels(VectorXd::Zero(2), VectorXd::Ones(3), 3, 4); }),
            ErrorCode::kInsufficientHistory);
}

TEST(ReconstructLevels, InvertsGrowth) {
  // Feeding the true growth rates back reproduces the observed levels.
  std::mt19937_64 rng(11);
  MatrixXd levels = fixtures::normal_matrix(rng, 20, 1).array().abs() + 50.0;
  const MatrixXd g = yoy_growth(levels, 4);
  const VectorXd lv = reconstruct_levels(g.col(0).tail(8), levels.col(0), 12, 4);
  EXPECT_LE((lv - levels.col(0).tail(8)).cwiseAbs().maxCoeff(), 1e-10);
}
