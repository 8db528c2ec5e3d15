#include "scmrelax/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "parallel.hpp"
#include "scmrelax/error.hpp"
#include "scmrelax/moments.hpp"
#include "scmrelax/solver.hpp"

namespace scmr {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct FoldData {
  MatrixXd fit_controls;
  VectorXd fit_treated;
  MatrixXd hold_controls;
  VectorXd hold_treated;
};

std::vector<FoldData> split_folds(const PanelData& panel, int n_folds) {
  const MatrixXd y = panel.pre_controls();
  const VectorXd y0 = panel.pre_treated();
  const int t0 = panel.t0();
  std::vector<FoldData> out;
  for (const auto& [start, len] : cv_folds(t0, n_folds)) {
    FoldData f;
    f.hold_controls = y.middleRows(start, len);
    f.hold_treated = y0.segment(start, len);
    const int rest = t0 - len;
    f.fit_controls.resize(rest, y.cols());
    f.fit_treated.resize(rest);
    f.fit_controls << y.topRows(start), y.bottomRows(t0 - start - len);
    f.fit_treated << y0.head(start), y0.tail(t0 - start - len);
    out.push_back(std::move(f));
  }
  return out;
}

double held_out_mse(const FoldData& f, const VectorXd& prediction) {
  return (f.hold_treated - prediction).squaredNorm() / static_cast<double>(f.hold_treated.size());
}

void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw Error(ErrorCode::kInvalidArgument, "tuning grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] >= grid[i - 1])) {
      throw Error(ErrorCode::kInvalidArgument, "tuning grid must be ascending");
    }
  }
}

void check_cv_panel(const PanelData& panel) {
  if (panel.t0() < 8) {
    throw Error(ErrorCode::kTooFewPeriods, "cross-validation needs t0 >= 8", {{"t0", panel.t0()}});
  }
}

// Fills fold_errors by evaluating score(grid index, fold index) for every
// pair, then reduces.
CvResult run_cv(std::string parameter, std::vector<double> grid, int n_folds, int workers,
                const std::function<double(std::size_t, std::size_t)>& score) {
  CvResult cv;
  cv.parameter = std::move(parameter);
  cv.n_folds = n_folds;
  cv.grid = std::move(grid);
  const std::size_t g = cv.grid.size();
  const auto f = static_cast<std::size_t>(n_folds);
  cv.fold_errors.resize(static_cast<Eigen::Index>(g), n_folds);
  detail::parallel_for(g * f, workers, [&](std::size_t task) {
    const std::size_t gi = task / f;
    const std::size_t fi = task % f;
    cv.fold_errors(static_cast<Eigen::Index>(gi), static_cast<Eigen::Index>(fi)) = score(gi, fi);
  });
  cv.mean_errors = cv.fold_errors.rowwise().mean();
  cv.chosen_index = cv_argmin(cv.mean_errors);
  cv.chosen = cv.grid[static_cast<std::size_t>(cv.chosen_index)];
  return cv;
}

}  // namespace

int cv_fold_count(int t0) { return t0 < 50 ? 2 : 4; }

std::vector<std::pair<int, int>> cv_folds(int t0, int n_folds) {
  if (n_folds < 1 || t0 < n_folds) {
    throw Error(ErrorCode::kInvalidArgument, "cannot split the window into that many folds",
                {{"t0", t0}, {"folds", n_folds}});
  }
  std::vector<std::pair<int, int>> out;
  const int base = t0 / n_folds;
  const int extra = t0 % n_folds;
  int start = 0;
  for (int i = 0; i < n_folds; ++i) {
    const int len = base + (i < extra ? 1 : 0);
    out.emplace_back(start, len);
    start += len;
  }
  return out;
}

int cv_argmin(const VectorXd& mean_errors) {
  const double best = mean_errors.minCoeff();
  for (Eigen::Index i = mean_errors.size() - 1; i >= 0; --i) {
    const double e = mean_errors[i];
    if (e == best || (std::isfinite(best) && e <= best + 1e-12 * std::abs(best))) {
      return static_cast<int>(i);
    }
  }
  return static_cast<int>(mean_errors.size()) - 1;
}

CvResult cv_select_eta(const PanelData& panel, const Divergence& d, int grid_size,
                       const CvOptions& options) {
  check_cv_panel(panel);
  const MomentPair full = compute_moments(panel);
  const EtaBar full_bar = eta_bar(full);
  std::vector<double> grid;
  if (options.grid) {
    grid = *options.grid;
  } else {
    if (grid_size < 1) {
      throw Error(ErrorCode::kInvalidArgument, "grid_size must be >= 1", {{"grid_size", grid_size}});
    }
    if (grid_size == 1) {
      grid.push_back(full_bar.eta_bar);
    } else {
      for (int i = 0; i < grid_size; ++i) {
        grid.push_back(full_bar.eta_bar * static_cast<double>(i) / (grid_size - 1));
      }
      grid.back() = full_bar.eta_bar;
    }
  }
  check_grid(grid);

  const int n_folds = cv_fold_count(panel.t0());
  const std::vector<FoldData> folds = split_folds(panel, n_folds);
  std::vector<MomentPair> fold_moments;
  std::vector<FeasibilityCertificate> certs;
  std::vector<double> ratios;
  for (const FoldData& f : folds) {
    fold_moments.push_back(compute_moments(f.fit_controls, f.fit_treated));
    certs.push_back(check_feasibility(fold_moments.back(), 0.0, options.tol));
    const double fold_bar = eta_bar(fold_moments.back()).eta_bar;
    ratios.push_back(full_bar.eta_bar > 0.0 ? fold_bar / full_bar.eta_bar : 0.0);
  }
  const FeasibilityCertificate full_cert = check_feasibility(full, 0.0, options.tol);
  const double margin = options.tol * std::max(1.0, moment_scale(full));

  return run_cv("eta", grid, n_folds, options.workers, [&](std::size_t gi, std::size_t fi) {
    const double eta = grid[gi];
    if (eta + margin < full_cert.eta_min) return kInf;
    RelaxationOptions ro;
    ro.tol = options.tol;
    ro.certificate = certs[fi];
    const RelaxationSolution sol = solve_relaxation(fold_moments[fi], d, eta * ratios[fi], ro);
    if (sol.status == SolveStatus::kInfeasible) return kInf;
    return held_out_mse(folds[fi], folds[fi].hold_controls * sol.w);
  });
}

std::vector<double> lambda_grid(const PanelData& panel, int grid_size) {
  if (grid_size < 1) {
    throw Error(ErrorCode::kInvalidArgument, "grid_size must be >= 1", {{"grid_size", grid_size}});
  }
  const MomentPair m = compute_moments(panel);
  double scale = m.sigma_hat.diagonal().mean();
  if (!(scale > 0.0)) scale = 1.0;
  std::vector<double> grid;
  if (grid_size == 1) {
    grid.push_back(1e2 * scale);
    return grid;
  }
  const double lo = std::log10(1e-4);
  const double hi = std::log10(1e2);
  for (int i = 0; i < grid_size; ++i) {
    grid.push_back(scale * std::pow(10.0, lo + (hi - lo) * i / (grid_size - 1)));
  }
  return grid;
}

CvResult cv_select_lambda(const PanelData& panel, PenaltyKind kind, int grid_size,
                          const CvOptions& options) {
  check_cv_panel(panel);
  std::vector<double> grid = options.grid ? *options.grid : lambda_grid(panel, grid_size);
  check_grid(grid);
  const int n_folds = cv_fold_count(panel.t0());
  const std::vector<FoldData> folds = split_folds(panel, n_folds);
  std::vector<MomentPair> fold_moments;
  for (const FoldData& f : folds) fold_moments.push_back(compute_moments(f.fit_controls, f.fit_treated));

  return run_cv("lambda", grid, n_folds, options.workers, [&](std::size_t gi, std::size_t fi) {
    const WeightSolution sol = solve_penalized(fold_moments[fi], kind, grid[gi], options.tol);
    return held_out_mse(folds[fi], folds[fi].hold_controls * sol.w);
  });
}

CvResult cv_select_fspda_terms(const PanelData& panel, int max_cap, const CvOptions& options) {
  check_cv_panel(panel);
  const int n_folds = cv_fold_count(panel.t0());
  const std::vector<FoldData> folds = split_folds(panel, n_folds);
  int shortest = panel.t0();
  for (const FoldData& f : folds) shortest = std::min(shortest, static_cast<int>(f.fit_treated.size()));
  const int top = std::min({panel.num_controls(), shortest - 2, max_cap});
  if (top < 1) {
    throw Error(ErrorCode::kTooFewPeriods, "fit windows too short for fsPDA",
                {{"shortest_fit", shortest}});
  }
  std::vector<double> grid;
  if (options.grid) {
    grid = *options.grid;
    for (double v : grid) {
      if (v < 1.0 || v > top || v != std::floor(v)) {
        throw Error(ErrorCode::kInvalidArgument, "fsPDA term grid must hold integers in [1, cap]",
                    {{"value", v}, {"cap", top}});
      }
    }
  } else {
    for (int m = 1; m <= top; ++m) grid.push_back(m);
  }
  check_grid(grid);

  return run_cv("max_terms", grid, n_folds, options.workers, [&](std::size_t gi, std::size_t fi) {
    const FoldData& f = folds[fi];
    const FsPdaFit fit =
        solve_fspda(f.fit_controls, f.fit_treated, static_cast<int>(grid[gi]), true);
    return held_out_mse(f, fspda_predict(fit, f.hold_controls));
  });
}

nlohmann::json to_json(const CvResult& cv) {
  nlohmann::json errors = nlohmann::json::array();
  for (Eigen::Index i = 0; i < cv.fold_errors.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index f = 0; f < cv.fold_errors.cols(); ++f) {
      const double e = cv.fold_errors(i, f);
      // JSON has no infinity; infeasible cells are written as null.
      row.push_back(std::isfinite(e) ? nlohmann::json(e) : nlohmann::json());
    }
    errors.push_back(std::move(row));
  }
  nlohmann::json means = nlohmann::json::array();
  for (Eigen::Index i = 0; i < cv.mean_errors.size(); ++i) {
    const double e = cv.mean_errors[i];
    means.push_back(std::isfinite(e) ? nlohmann::json(e) : nlohmann::json());
  }
  return {{"parameter", cv.parameter}, {"grid", cv.grid},         {"fold_errors", errors},
          {"mean_errors", means},      {"chosen", cv.chosen},     {"chosen_index", cv.chosen_index},
          {"n_folds", cv.n_folds}};
}

}  // namespace scmr
