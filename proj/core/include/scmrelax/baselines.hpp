#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "scmrelax/moments.hpp"
#include "scmrelax/panel.hpp"
#include "scmrelax/solver.hpp"

namespace scmr {

/// Simplex-constrained weights from one of the comparator estimators.
struct WeightSolution {
  Eigen::VectorXd w;
  double objective = 0.0;
  SolveStatus status = SolveStatus::kMaxIterations;
  int iterations = 0;
  /// Multiplier-free KKT residual (see simplex_kkt_residual).
  double kkt_max_residual = 0.0;
  /// Set by solve_scm when the minimizer is not unique; w is then the
  /// minimum-norm minimizer.
  bool non_unique = false;
};

/// Residual of the KKT system of min f(w) + l1 * sum|w_j - 1/J| over the
/// simplex, given grad f(w). For every j the stationarity condition restricts
/// the simplex multiplier to an interval; the residual is half the width by
/// which those intervals fail to overlap, plus primal violations. Weights at
/// most `zero_tol` are treated as being on the boundary.
double simplex_kkt_residual(const Eigen::VectorXd& smooth_gradient, const Eigen::VectorXd& w,
                            double l1_weight = 0.0, double zero_tol = 1e-10);

/// Canonical SCM: minimize w' Sigma w - 2 Upsilon' w over the simplex.
WeightSolution solve_scm(const MomentPair& m, double tol = 1e-8);

struct ClosedFormScm {
  Eigen::VectorXd w;
  double gamma = 0.0;
};

/// Sum-to-one least squares weights ignoring nonnegativity:
/// w = Sigma^{-1} (Upsilon - gamma 1), gamma = (1' Sigma^{-1} Upsilon - 1) / (1' Sigma^{-1} 1).
/// Throws SingularMoment when cond(Sigma) >= 1e12.
ClosedFormScm scm_closed_form_unconstrained(const MomentPair& m);

enum class PenaltyKind { kLasso, kRidge };

std::string to_string(PenaltyKind kind);

/// min w' Sigma w - 2 Upsilon' w + lambda * penalty(w - 1/J) over the simplex;
/// penalty is the l1 norm (Lasso) or the squared l2 norm (Ridge).
WeightSolution solve_penalized(const MomentPair& m, PenaltyKind kind, double lambda,
                               double tol = 1e-8);

/// Forward-selection panel-data approach: OLS of the treated series on an
/// intercept and greedily chosen controls (no simplex constraint).
struct FsPdaFit {
  std::vector<int> selected;      // 1-based control indices, in order of entry
  Eigen::VectorXd coefficients;   // one per selected control
  double intercept = 0.0;
  double rss = 0.0;
  std::vector<double> bic_path;   // BIC after each accepted term
};

/// Stops at `max_terms` or, when `bic_stop` is set, as soon as adding the best
/// remaining control does not lower T0 log(RSS/T0) + k log T0. At least one
/// control is always selected. Requires 1 <= max_terms <= min(J, t0 - 1).
FsPdaFit solve_fspda(const PanelData& panel, int max_terms, bool bic_stop = true);

/// Same as above on explicit pre-treatment blocks.
FsPdaFit solve_fspda(const Eigen::MatrixXd& controls, const Eigen::VectorXd& treated,
                     int max_terms, bool bic_stop = true);

/// intercept + controls(:, selected) * coefficients for every row of `controls`.
Eigen::VectorXd fspda_predict(const FsPdaFit& fit, const Eigen::MatrixXd& controls);

}  // namespace scmr
