#pragma once

#include <functional>

#include <Eigen/Core>

namespace scmr::ipm {

/// Smooth convex objective. Both callbacks are only invoked with
/// x[0, num_bounded) > 0; `derivatives` overwrites the gradient and the dense
/// Hessian. `value` is needed by solve_barrier only.
struct Objective {
  std::function<double(const Eigen::VectorXd& x)> value;
  std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& grad, Eigen::MatrixXd& hess)>
      derivatives;
};

/// Dense convex program
///
///   minimize f(x)  s.t.  A x = b,  G x <= h,  x_i >= 0 for i < num_bounded.
///
/// Equality rows may be linearly dependent; they are reduced to an
/// independent set before the iteration starts.
struct Program {
  Eigen::Index num_vars = 0;
  Eigen::Index num_bounded = 0;
  Objective objective;
  Eigen::MatrixXd eq_matrix;
  Eigen::VectorXd eq_rhs;
  Eigen::MatrixXd ineq_matrix;
  Eigen::VectorXd ineq_rhs;
};

struct Options {
  double tol = 1e-9;             // absolute residual target on every KKT block
  int max_iterations = 500;
  double step_fraction = 0.995;  // fraction-to-boundary
  double rank_tol = 1e-10;       // relative singular value cutoff for A
  double consistency_tol = 1e-8; // relative residual allowed when reducing A x = b
};

enum class Outcome {
  kConverged,
  kMaxIterations,
  kInconsistentEqualities,
  kStalled,
  kInfeasibleStart,
};

struct Result {
  Outcome outcome = Outcome::kMaxIterations;
  Eigen::VectorXd x;
  Eigen::VectorXd eq_dual;     // one per original equality row
  Eigen::VectorXd ineq_dual;   // z >= 0 for G x <= h
  Eigen::VectorXd bound_dual;  // v >= 0 for x_B >= 0
  int iterations = 0;
  double dual_residual = 0.0;
  double primal_residual = 0.0;
  double complementarity = 0.0;

  bool converged() const { return outcome == Outcome::kConverged; }
};

/// Infeasible-start primal-dual interior-point method with Mehrotra
/// predictor-corrector steps. Meant for linear and quadratic objectives.
/// Bounded coordinates of `x0` that are not positive are reset; x0 need not
/// satisfy the equalities or inequalities.
Result solve(const Program& program, const Eigen::VectorXd& x0, const Options& options = {});

/// Primal log-barrier method: Newton centering with backtracking on the
/// barrier function, barrier weight multiplied by 10 per stage. Handles
/// objectives whose curvature blows up at the boundary (log, x log x, x^p).
/// `x0` must have x0_B > 0 (otherwise the result is kInfeasibleStart); the
/// equalities and inequalities may be violated at the start, though a
/// strictly feasible start converges more reliably.
Result solve_barrier(const Program& program, const Eigen::VectorXd& x0,
                     const Options& options = {});

}  // namespace scmr::ipm
