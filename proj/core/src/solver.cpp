#include "scmrelax/solver.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/QR>

#include "scmrelax/error.hpp"
#include "scmrelax/interior_point.hpp"

namespace scmr {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kBoundaryZero = 1e-10;

// Below this (relative to the moment scale) the band is solved as an equality.
constexpr double kEqualityBand = 1e-12;

void check_tolerance(double tol) {
  if (!(tol > 0.0 && tol <= 1e-2)) {
    throw Error(ErrorCode::kInvalidArgument, "tol must lie in (0, 1e-2]", {{"tol", tol}});
  }
}

VectorXd band_residual(const MomentPair& m, const VectorXd& w, double gamma) {
  return (m.sigma_hat * w - m.upsilon_hat).array() + gamma;
}

RelaxationSolution equal_weight_solution(const MomentPair& m, const Divergence& d, double eta) {
  const auto j = m.j;
  const EtaBar eb = eta_bar(m);
  RelaxationSolution sol;
  sol.divergence = d;
  sol.eta = eta;
  sol.w = VectorXd::Constant(j, 1.0 / j);
  sol.raw_w = sol.w;
  sol.gamma = eb.gamma;
  sol.duals.band_upper = VectorXd::Zero(j);
  sol.duals.band_lower = VectorXd::Zero(j);
  sol.duals.bound = VectorXd::Zero(j);
  sol.duals.simplex = -d.derivative(1.0 / j);
  sol.objective = divergence_value(d, sol.w);
  sol.status = SolveStatus::kConverged;
  return sol;
}

// Active-set crossover for quadratic divergences. The interior-point iterate
// identifies the active band rows (dual above ratio times slack) and the
// support (ratio times weight above its bound dual); the equality-constrained
// KKT system on that face is then solved exactly. Thin bands otherwise stall
// near 1e-7 in stationarity.
std::optional<RelaxationSolution> quadratic_crossover(const RelaxationSolution& sol,
                                                      const MomentPair& m, double tol,
                                                      double ratio) {
  const auto j = m.j;
  const double scale = moment_scale(m);
  const MatrixXd sig = m.sigma_hat / scale;
  const VectorXd ups = m.upsilon_hat / scale;
  const double eta = sol.eta / scale;
  const VectorXd r = band_residual(m, sol.w, sol.gamma) / scale;
  const Divergence& d = sol.divergence;
  const double curv = d.second_derivative(1.0);
  const double g0 = d.derivative(0.0);

  std::vector<Eigen::Index> support, upper, lower;
  for (Eigen::Index i = 0; i < j; ++i) {
    if (ratio * sol.w[i] > sol.duals.bound[i]) support.push_back(i);
    if (sol.duals.band_upper[i] * scale > ratio * (eta - r[i])) upper.push_back(i);
    if (sol.duals.band_lower[i] * scale > ratio * (eta + r[i])) lower.push_back(i);
  }
  const auto k = static_cast<Eigen::Index>(support.size());
  const auto nu = static_cast<Eigen::Index>(upper.size());
  const auto nl = static_cast<Eigen::Index>(lower.size());
  if (k == 0) return std::nullopt;
  // Unknowns: w_S, gamma, mu_U, mu_L, nu (simplex multiplier).
  const Eigen::Index n = k + 1 + nu + nl + 1;
  const Eigen::Index ig = k, iu = k + 1, il = k + 1 + nu, in = n - 1;
  MatrixXd a = MatrixXd::Zero(n, n);
  VectorXd b = VectorXd::Zero(n);
  for (Eigen::Index s = 0; s < k; ++s) {
    const Eigen::Index i = support[s];
    a(s, s) = curv;
    for (Eigen::Index c = 0; c < nu; ++c) a(s, iu + c) = sig(i, upper[c]);
    for (Eigen::Index c = 0; c < nl; ++c) a(s, il + c) = -sig(i, lower[c]);
    a(s, in) = 1.0;
    b[s] = -g0;
  }
  for (Eigen::Index c = 0; c < nu; ++c) a(ig, iu + c) = 1.0;
  for (Eigen::Index c = 0; c < nl; ++c) a(ig, il + c) = -1.0;
  for (Eigen::Index c = 0; c < nu; ++c) {
    for (Eigen::Index s = 0; s < k; ++s) a(iu + c, s) = sig(upper[c], support[s]);
    a(iu + c, ig) = 1.0;
    b[iu + c] = ups[upper[c]] + eta;
  }
  for (Eigen::Index c = 0; c < nl; ++c) {
    for (Eigen::Index s = 0; s < k; ++s) a(il + c, s) = sig(lower[c], support[s]);
    a(il + c, ig) = 1.0;
    b[il + c] = ups[lower[c]] - eta;
  }
  for (Eigen::Index s = 0; s < k; ++s) a(in, s) = 1.0;
  b[in] = 1.0;
  const VectorXd x = a.completeOrthogonalDecomposition().solve(b);
  if (!x.allFinite()) return std::nullopt;

  RelaxationSolution out = sol;
  out.w = VectorXd::Zero(j);
  for (Eigen::Index s = 0; s < k; ++s) out.w[support[s]] = x[s];
  if (out.w.minCoeff() < 0.0) return std::nullopt;
  out.gamma = x[ig] * scale;
  VectorXd band = VectorXd::Zero(j);
  out.duals.band_upper = VectorXd::Zero(j);
  out.duals.band_lower = VectorXd::Zero(j);
  for (Eigen::Index c = 0; c < nu; ++c) {
    out.duals.band_upper[upper[c]] = x[iu + c] / scale;
    band[upper[c]] += x[iu + c];
  }
  for (Eigen::Index c = 0; c < nl; ++c) {
    out.duals.band_lower[lower[c]] = x[il + c] / scale;
    band[lower[c]] -= x[il + c];
  }
  out.duals.simplex = x[in];
  // Bound duals are whatever stationarity leaves off the support.
  out.duals.bound = (divergence_gradient(d, out.w) + sig * band).array() + x[in];
  for (Eigen::Index s = 0; s < k; ++s) out.duals.bound[support[s]] = 0.0;
  out.raw_w = out.w;
  out.objective = divergence_value(d, out.w);
  out.kkt = verify_kkt(out, m, tol);
  return out;
}

}  // namespace

double KktReport::max_residual() const {
  return std::max({stationarity, primal_feasibility, dual_feasibility, complementarity});
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kConverged: return "Converged";
    case SolveStatus::kInfeasible: return "Infeasible";
    case SolveStatus::kMaxIterations: return "MaxIterations";
  }
  return "Unknown";
}

FeasibilityCertificate check_feasibility(const MomentPair& m, double eta, double tol) {
  if (!(eta >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "eta must be >= 0", {{"eta", eta}});
  check_tolerance(tol);
  const auto j = m.j;
  FeasibilityCertificate cert;
  cert.eta = eta;

  const EtaBar eb = eta_bar(m);
  if (j == 1) {
    cert.w = VectorXd::Ones(1);
    cert.eta_min = 0.0;
    cert.gamma = m.upsilon_hat[0] - m.sigma_hat(0, 0);
  } else {
    const double scale = moment_scale(m);
    const MatrixXd sig = m.sigma_hat / scale;
    const VectorXd ups = m.upsilon_hat / scale;

    // x = (w, gamma, s): minimize s subject to |sig w - ups + gamma 1| <= s 1.
    ipm::Program lp;
    lp.num_vars = j + 2;
    lp.num_bounded = j;
    lp.objective.derivatives = [j](const VectorXd&, VectorXd& grad, MatrixXd& hess) {
      grad.setZero();
      grad[j + 1] = 1.0;
      hess.setZero();
    };
    lp.eq_matrix = MatrixXd::Zero(1, j + 2);
    lp.eq_matrix.leftCols(j).setOnes();
    lp.eq_rhs = VectorXd::Ones(1);
    lp.ineq_matrix = MatrixXd::Zero(2 * j, j + 2);
    lp.ineq_matrix.topLeftCorner(j, j) = sig;
    lp.ineq_matrix.bottomLeftCorner(j, j) = -sig;
    lp.ineq_matrix.block(0, j, j, 1).setOnes();
    lp.ineq_matrix.block(j, j, j, 1).setConstant(-1.0);
    lp.ineq_matrix.col(j + 1).setConstant(-1.0);
    lp.ineq_rhs.resize(2 * j);
    lp.ineq_rhs << ups, -ups;

    VectorXd x0(j + 2);
    x0.head(j).setConstant(1.0 / j);
    x0[j] = eb.gamma / scale;
    x0[j + 1] = eb.eta_bar / scale + 1.0;

    ipm::Options opt;
    opt.tol = 0.1 * tol;
    const ipm::Result res = ipm::solve(lp, x0, opt);
    // eta_min is recomputed from w below, so an iterate that stalled close to
    // the optimum still gives a valid certificate.
    const double loose = std::max(tol, 1e-8);
    const bool usable = res.x.allFinite() && res.dual_residual <= loose &&
                        res.primal_residual <= loose && res.complementarity <= loose;
    if (!res.converged() && !usable) {
      throw Error(ErrorCode::kNumericalFailure, "feasibility program did not converge",
                  {{"iterations", res.iterations},
                   {"dual_residual", res.dual_residual},
                   {"primal_residual", res.primal_residual},
                   {"complementarity", res.complementarity}});
    }
    VectorXd w = res.x.head(j).cwiseMax(0.0);
    w /= w.sum();
    auto radius = [&](const VectorXd& x) {
      const VectorXd v = sig * x - ups;
      return 0.5 * (v.maxCoeff() - v.minCoeff());
    };
    // The LP closes a consistent band only to its own tolerance. When the band
    // is nearly closed, Newton corrections on the LP support (minimum-norm
    // solutions of sig_S d + e 1 = -r, 1'd = 0) drive the residual to rounding.
    double rad = radius(w);
    for (int pass = 0; pass < 3 && rad > 0.0 && rad <= 1e-6; ++pass) {
      std::vector<Eigen::Index> support;
      for (Eigen::Index i = 0; i < j; ++i) {
        if (w[i] > 1e-12) support.push_back(i);
      }
      const auto k = static_cast<Eigen::Index>(support.size());
      const VectorXd v = sig * w - ups;
      MatrixXd a = MatrixXd::Zero(j + 1, k + 1);
      for (Eigen::Index c = 0; c < k; ++c) {
        a.block(0, c, j, 1) = sig.col(support[c]);
        a(j, c) = 1.0;
      }
      a.block(0, k, j, 1).setOnes();
      VectorXd rhs(j + 1);
      rhs << -(v.array() + (-0.5 * (v.maxCoeff() + v.minCoeff()))).matrix(), 1.0 - w.sum();
      const VectorXd step = a.completeOrthogonalDecomposition().solve(rhs);
      VectorXd cand = w;
      for (Eigen::Index c = 0; c < k; ++c) cand[support[c]] += step[c];
      if (!(cand.minCoeff() >= 0.0)) break;
      const double cand_rad = radius(cand);
      if (!(cand_rad < rad)) break;
      w = cand;
      rad = cand_rad;
    }
    const VectorXd v = m.sigma_hat * w - m.upsilon_hat;
    cert.w = w;
    cert.eta_min = 0.5 * (v.maxCoeff() - v.minCoeff());
    cert.gamma = -0.5 * (v.maxCoeff() + v.minCoeff());
    if (cert.eta_min > eb.eta_bar) {
      cert.w = VectorXd::Constant(j, 1.0 / j);
      cert.eta_min = eb.eta_bar;
      cert.gamma = eb.gamma;
    }
  }
  cert.feasible = eta + tol * std::max(1.0, moment_scale(m)) >= cert.eta_min;
  return cert;
}

KktReport verify_kkt(const RelaxationSolution& sol, const MomentPair& m, double tol) {
  KktReport report;
  const VectorXd& w = sol.w;
  const RelaxationDuals& du = sol.duals;
  const VectorXd r = band_residual(m, w, sol.gamma);
  const VectorXd band = du.band_upper - du.band_lower;

  VectorXd stat = divergence_gradient(sol.divergence, w) + m.sigma_hat * band - du.bound;
  stat.array() += du.simplex;
  report.stationarity = std::max(stat.cwiseAbs().maxCoeff(), std::abs(band.sum()));

  const double scale = std::max(1.0, moment_scale(m));
  const double band_violation = std::max(0.0, r.cwiseAbs().maxCoeff() - sol.eta) / scale;
  report.primal_feasibility =
      std::max({std::max(0.0, -w.minCoeff()), std::abs(w.sum() - 1.0), band_violation});

  report.dual_feasibility = std::max({0.0, -du.band_upper.minCoeff(), -du.band_lower.minCoeff(),
                                      -du.bound.minCoeff()});

  const VectorXd upper_slack = (sol.eta - r.array()).matrix();
  const VectorXd lower_slack = (sol.eta + r.array()).matrix();
  report.complementarity = std::max({du.band_upper.cwiseProduct(upper_slack).cwiseAbs().maxCoeff(),
                                     du.band_lower.cwiseProduct(lower_slack).cwiseAbs().maxCoeff(),
                                     du.bound.cwiseProduct(w).cwiseAbs().maxCoeff()});
  report.duality_gap =
      du.band_upper.dot(upper_slack) + du.band_lower.dot(lower_slack) + du.bound.dot(w);
  report.passed = report.max_residual() <= tol;
  return report;
}

RelaxationSolution solve_relaxation(const MomentPair& m, const Divergence& d, double eta,
                                    const RelaxationOptions& options) {
  if (!(eta >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "eta must be >= 0", {{"eta", eta}});
  check_tolerance(options.tol);
  const auto j = m.j;
  if (j < 1 || m.sigma_hat.rows() != j || m.upsilon_hat.size() != j) {
    throw Error(ErrorCode::kDimensionMismatch, "moment dimensions are inconsistent");
  }

  if (j == 1) {
    RelaxationSolution sol = equal_weight_solution(m, d, eta);
    sol.gamma = m.upsilon_hat[0] - m.sigma_hat(0, 0);
    sol.kkt = verify_kkt(sol, m, options.tol);
    return sol;
  }

  const EtaBar eb = eta_bar(m);
  if (eta >= eb.eta_bar) {
    RelaxationSolution sol = equal_weight_solution(m, d, eta);
    sol.kkt = verify_kkt(sol, m, options.tol);
    return sol;
  }

  const double scale = moment_scale(m);
  FeasibilityCertificate cert =
      options.certificate ? *options.certificate : check_feasibility(m, eta, options.tol);
  cert.eta = eta;
  cert.feasible = eta + options.tol * std::max(1.0, scale) >= cert.eta_min;
  if (!cert.feasible) {
    RelaxationSolution sol;
    sol.divergence = d;
    sol.eta = eta;
    sol.status = SolveStatus::kInfeasible;
    sol.w = cert.w;
    sol.raw_w = cert.w;
    sol.gamma = cert.gamma;
    sol.certificate = cert;
    return sol;
  }
  // The barrier path needs a band with nonempty interior, so radii within
  // tol of eta_min are lifted by that margin; the interior-point path for L2
  // handles the degenerate band directly.
  const bool quadratic = d.kind() == DivergenceKind::kL2;
  const double margin = options.tol * std::max(1.0, scale);
  double eta_eff = std::max(eta, cert.eta_min);
  if (!quadratic && eta_eff > 0.0 && eta_eff < cert.eta_min + margin) {
    eta_eff = cert.eta_min + margin;
  }

  const MatrixXd sig = m.sigma_hat / scale;
  const VectorXd ups = m.upsilon_hat / scale;

  ipm::Program prog;
  prog.num_vars = j + 1;
  prog.num_bounded = j;
  prog.objective.value = [&d, j](const VectorXd& x) { return divergence_value(d, x.head(j)); };
  prog.objective.derivatives = [&d, j](const VectorXd& x, VectorXd& grad, MatrixXd& hess) {
    hess.setZero();
    grad.setZero();
    for (Eigen::Index i = 0; i < j; ++i) {
      grad[i] = d.derivative(x[i]);
      hess(i, i) = d.second_derivative(x[i]);
    }
  };

  auto build = [&](bool equality, double eta_s) {
    if (equality) {
      prog.eq_matrix = MatrixXd::Zero(j + 1, j + 1);
      prog.eq_matrix.topLeftCorner(j, j) = sig;
      prog.eq_matrix.block(0, j, j, 1).setOnes();
      prog.eq_matrix.block(j, 0, 1, j).setOnes();
      prog.eq_rhs.resize(j + 1);
      prog.eq_rhs << ups, 1.0;
      prog.ineq_matrix.resize(0, j + 1);
      prog.ineq_rhs.resize(0);
    } else {
      prog.eq_matrix = MatrixXd::Zero(1, j + 1);
      prog.eq_matrix.leftCols(j).setOnes();
      prog.eq_rhs = VectorXd::Ones(1);
      prog.ineq_matrix = MatrixXd::Zero(2 * j, j + 1);
      prog.ineq_matrix.topLeftCorner(j, j) = sig;
      prog.ineq_matrix.bottomLeftCorner(j, j) = -sig;
      prog.ineq_matrix.block(0, j, j, 1).setOnes();
      prog.ineq_matrix.block(j, j, j, 1).setConstant(-1.0);
      prog.ineq_rhs.resize(2 * j);
      prog.ineq_rhs << (ups.array() + eta_s).matrix(), (eta_s - ups.array()).matrix();
    }

    VectorXd x0(j + 1);
    if (equality) {
      x0.head(j).setConstant(1.0 / j);
      x0[j] = eb.gamma / scale;
    } else {
      // Strictly feasible start: the band radius is convex in w, so mixing the
      // witness with equal weights lands halfway between eta_min and eta.
      const double theta = std::clamp(
          0.5 * (eta_s * scale - cert.eta_min) / (eb.eta_bar - cert.eta_min), 0.0, 1.0);
      const VectorXd w0 = (1.0 - theta) * cert.w + VectorXd::Constant(j, theta / j);
      const VectorXd v = sig * w0 - ups;
      x0.head(j) = w0;
      x0[j] = -0.5 * (v.maxCoeff() + v.minCoeff());
    }
    if (options.warm_w) {
      if (options.warm_w->size() != j || !(options.warm_w->minCoeff() > 0.0)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "warm start weights must be positive with length J");
      }
      VectorXd warm(j + 1);
      warm.head(j) = *options.warm_w / options.warm_w->sum();
      warm[j] = options.warm_gamma.value_or(eb.gamma) / scale;
      if (equality || quadratic) {
        x0 = warm;
      } else {
        // Pull the warm start toward the feasible default until it is strictly
        // inside the band.
        double theta = 1.0;
        for (int k = 0; k < 60; ++k, theta *= 0.5) {
          const VectorXd trial = x0 + theta * (warm - x0);
          if ((prog.ineq_rhs - prog.ineq_matrix * trial).minCoeff() > 0.0) {
            x0 = trial;
            break;
          }
        }
      }
    }
    return x0;
  };

  ipm::Options opt;
  opt.tol = 0.1 * options.tol;
  opt.max_iterations = options.max_iterations;
  auto run = [&](const VectorXd& x0) {
    return quadratic ? ipm::solve(prog, x0, opt) : ipm::solve_barrier(prog, x0, opt);
  };

  // eta = 0 with a (numerically) exact fit is solved as the equality system
  // itself. A system that is inconsistent, or only consistent to within the
  // rank tolerance (the iteration then diverges), is replaced by the thin band.
  bool equality_band =
      eta_eff / scale <= kEqualityBand || (eta == 0.0 && cert.eta_min <= margin);
  ipm::Result res = run(build(equality_band, equality_band ? 0.0 : eta_eff / scale));
  if (equality_band && !res.converged()) {
    equality_band = false;
    eta_eff = cert.eta_min + margin;
    res = run(build(false, eta_eff / scale));
  }
  if (equality_band) eta_eff = eta;

  RelaxationSolution sol;
  sol.divergence = d;
  sol.eta = eta_eff;
  sol.iterations = res.iterations;
  sol.raw_w = res.x.head(j);
  sol.w = sol.raw_w;
  sol.gamma = res.x[j] * scale;
  if (!d.requires_positive()) {
    bool clipped = false;
    for (Eigen::Index i = 0; i < j; ++i) {
      if (sol.w[i] <= kBoundaryZero) {
        sol.w[i] = 0.0;
        clipped = true;
      }
    }
    if (clipped) sol.w /= sol.w.sum();
  }

  sol.duals.bound = res.bound_dual;
  if (equality_band) {
    const VectorXd band = res.eq_dual.head(j) / scale;
    sol.duals.band_upper = band.cwiseMax(0.0);
    sol.duals.band_lower = (-band).cwiseMax(0.0);
    sol.duals.simplex = res.eq_dual[j];
  } else {
    sol.duals.band_upper = res.ineq_dual.head(j) / scale;
    sol.duals.band_lower = res.ineq_dual.tail(j) / scale;
    sol.duals.simplex = res.eq_dual[0];
  }
  sol.objective = divergence_value(d, sol.w);
  sol.kkt = verify_kkt(sol, m, options.tol);
  if (quadratic && !sol.kkt.passed) {
    // Ambiguous rows are resolved by trying a ladder of dual/slack ratios.
    std::optional<RelaxationSolution> best;
    for (double ratio : {1.0, 1e-2, 1e2, 1e-4, 1e4}) {
      std::optional<RelaxationSolution> cand = quadratic_crossover(sol, m, options.tol, ratio);
      if (cand && (!best || cand->kkt.max_residual() < best->kkt.max_residual())) best = std::move(cand);
      if (best && best->kkt.passed) break;
    }
    if (best && best->kkt.max_residual() < sol.kkt.max_residual()) {
      const int iterations = sol.iterations;
      sol = *best;
      sol.iterations = iterations;
      if (sol.kkt.passed) {
        sol.status = SolveStatus::kConverged;
        return sol;
      }
    }
  }
  sol.status = (res.converged() || sol.kkt.passed) ? SolveStatus::kConverged
                                                   : SolveStatus::kMaxIterations;
  return sol;
}

}  // namespace scmr
