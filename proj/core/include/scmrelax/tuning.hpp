#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "scmrelax/baselines.hpp"
#include "scmrelax/divergence.hpp"
#include "scmrelax/panel.hpp"

namespace scmr {

struct CvResult {
  std::string parameter;          // "eta", "lambda" or "max_terms"
  std::vector<double> grid;       // ascending
  Eigen::MatrixXd fold_errors;    // grid x folds; +inf marks an infeasible fit
  Eigen::VectorXd mean_errors;
  double chosen = 0.0;
  int chosen_index = 0;
  int n_folds = 0;
};

struct CvOptions {
  double tol = 1e-8;
  /// Threads used for the grid x fold evaluations; results do not depend on it.
  int workers = 1;
  /// Replaces the default grid when set (must be ascending).
  std::optional<std::vector<double>> grid;
};

/// 2 folds when t0 < 50, else 4.
int cv_fold_count(int t0);

/// Contiguous blocks (start, length) covering [0, t0); lengths differ by at
/// most one, longer blocks first.
std::vector<std::pair<int, int>> cv_folds(int t0, int n_folds);

/// Index of the smallest mean error; near-ties (1e-12 relative) go to the
/// larger tuning value.
int cv_argmin(const Eigen::VectorXd& mean_errors);

/// Selects the band radius on a linear grid over [0, eta_bar]. Each fold fits
/// on the other blocks with the radius rescaled by eta_bar(fold) / eta_bar(full)
/// and is scored by the held-out MSE against the treated series. Grid points
/// infeasible in a fold, or on the full sample, score +inf. Requires t0 >= 8.
CvResult cv_select_eta(const PanelData& panel, const Divergence& d, int grid_size = 20,
                       const CvOptions& options = {});

/// Default penalty grid: log-spaced over [1e-4, 1e2] times the mean diagonal of
/// sigma_hat; a single point is the upper end.
std::vector<double> lambda_grid(const PanelData& panel, int grid_size);

CvResult cv_select_lambda(const PanelData& panel, PenaltyKind kind, int grid_size = 20,
                          const CvOptions& options = {});

/// Chooses the fsPDA term cap from 1..min(J, shortest fit window - 2, max_cap).
CvResult cv_select_fspda_terms(const PanelData& panel, int max_cap = 10,
                               const CvOptions& options = {});

nlohmann::json to_json(const CvResult& cv);

}  // namespace scmr
