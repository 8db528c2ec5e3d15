#pragma once

#include <optional>
#include <string>

#include <Eigen/Core>

#include "scmrelax/divergence.hpp"
#include "scmrelax/moments.hpp"

namespace scmr {

/// KKT residuals of the relaxation program
///
///   min sum_j g(w_j)  s.t.  w in simplex,  |Sigma w - Upsilon + gamma 1|_inf <= eta.
///
/// Band violations are reported relative to max(1, moment scale); every other
/// entry is absolute.
struct KktReport {
  double stationarity = 0.0;
  double primal_feasibility = 0.0;
  double dual_feasibility = 0.0;
  double complementarity = 0.0;
  double duality_gap = 0.0;
  bool passed = false;

  double max_residual() const;
};

enum class SolveStatus { kConverged, kInfeasible, kMaxIterations };

std::string to_string(SolveStatus status);

/// Outcome of the auxiliary program min s over (w, gamma) with
/// |Sigma w - Upsilon + gamma 1|_inf <= s and w in the simplex.
struct FeasibilityCertificate {
  bool feasible = false;
  double eta = 0.0;      // radius that was tested
  double eta_min = 0.0;  // smallest feasible radius (attained by the witness)
  Eigen::VectorXd w;     // witness weights
  double gamma = 0.0;    // witness shift
};

/// Lagrange multipliers in the original (unscaled) problem.
struct RelaxationDuals {
  Eigen::VectorXd band_upper;  // Sigma w - Upsilon + gamma 1 <= eta
  Eigen::VectorXd band_lower;  // -(Sigma w - Upsilon + gamma 1) <= eta
  Eigen::VectorXd bound;       // w >= 0
  double simplex = 0.0;        // sum(w) = 1
};

struct RelaxationSolution {
  Eigen::VectorXd w;
  double gamma = 0.0;
  double eta = 0.0;
  double objective = 0.0;
  KktReport kkt;
  SolveStatus status = SolveStatus::kMaxIterations;
  int iterations = 0;
  Divergence divergence = Divergence::l2();
  RelaxationDuals duals;
  Eigen::VectorXd raw_w;  // interior-point iterate before boundary clean-up
  std::optional<FeasibilityCertificate> certificate;
};

struct RelaxationOptions {
  double tol = 1e-8;
  int max_iterations = 500;
  /// Result of check_feasibility on the same moments (any eta); skips the
  /// feasibility LP when several radii are solved on one MomentPair.
  std::optional<FeasibilityCertificate> certificate;
  /// Starting weights (strictly positive, any scale) and shift.
  std::optional<Eigen::VectorXd> warm_w;
  std::optional<double> warm_gamma;
};

/// Solves the g-SCM-relaxation program. Returns status kInfeasible (with a
/// certificate) when the feasible set is empty; throws NumericalFailure only
/// for malformed inputs the interior-point method cannot digest.
RelaxationSolution solve_relaxation(const MomentPair& m, const Divergence& d, double eta,
                                    const RelaxationOptions& options = {});

FeasibilityCertificate check_feasibility(const MomentPair& m, double eta, double tol = 1e-8);

/// Recomputes every KKT block from (w, gamma, duals) and the moments.
KktReport verify_kkt(const RelaxationSolution& sol, const MomentPair& m, double tol);

}  // namespace scmr
