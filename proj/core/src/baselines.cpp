#include "scmrelax/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "scmrelax/error.hpp"
#include "scmrelax/interior_point.hpp"

namespace scmr {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kBoundaryZero = 1e-10;
constexpr double kKinkTol = 1e-7;

void check_tolerance(double tol) {
  if (!(tol > 0.0 && tol <= 1e-2)) {
    throw Error(ErrorCode::kInvalidArgument, "tol must lie in (0, 1e-2]", {{"tol", tol}});
  }
}

VectorXd clean_weights(VectorXd w) {
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] <= kBoundaryZero) w[i] = 0.0;
  }
  return w / w.sum();
}

// Quadratic program min x' Q x + c' x (Q given as the Hessian 2Q) over the
// simplex in the first J coordinates, plus optional extra rows.
ipm::Program simplex_program(Eigen::Index j, Eigen::Index n, MatrixXd hessian, VectorXd linear) {
  ipm::Program prog;
  prog.num_vars = n;
  prog.num_bounded = j;
  prog.objective.value = [hessian, linear](const VectorXd& x) {
    return 0.5 * x.dot(hessian * x) + linear.dot(x);
  };
  prog.objective.derivatives = [hessian, linear](const VectorXd& x, VectorXd& grad,
                                                 MatrixXd& hess) {
    grad = hessian * x + linear;
    hess = hessian;
  };
  prog.eq_matrix = MatrixXd::Zero(1, n);
  prog.eq_matrix.leftCols(j).setOnes();
  prog.eq_rhs = VectorXd::Ones(1);
  return prog;
}

SolveStatus status_from(const ipm::Result& res, double kkt, double tol) {
  return (res.converged() || kkt <= tol) ? SolveStatus::kConverged : SolveStatus::kMaxIterations;
}

// Active-set clean-up for min 0.5 x'Hx + c'x over the simplex. Interior-point
// iterates approach a degenerate vertex only at the rate sqrt(mu), so the
// supports {w_i > tau} for a ladder of thresholds are tried, the equality
// constrained problem is solved exactly on each, and the candidate with the
// smallest KKT residual wins.
VectorXd polish_simplex_qp(const MatrixXd& hessian, const VectorXd& linear, const VectorXd& w) {
  const Eigen::Index j = w.size();
  VectorXd best = w;
  double best_res = simplex_kkt_residual(hessian * w + linear, w);
  const double top = w.maxCoeff();
  for (double tau = 1e-9; tau <= 1e-2; tau *= 10.0) {
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < j; ++i) {
      if (w[i] > tau * top) support.push_back(i);
    }
    const auto k = static_cast<Eigen::Index>(support.size());
    if (k == 0) continue;
    MatrixXd kkt = MatrixXd::Zero(k + 1, k + 1);
    VectorXd rhs(k + 1);
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index b = 0; b < k; ++b) kkt(a, b) = hessian(support[a], support[b]);
      kkt(a, k) = 1.0;
      kkt(k, a) = 1.0;
      rhs[a] = -linear[support[a]];
    }
    rhs[k] = 1.0;
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(kkt);
    if (qr.rank() < k + 1) continue;
    const VectorXd sol = qr.solve(rhs);
    VectorXd cand = VectorXd::Zero(j);
    for (Eigen::Index a = 0; a < k; ++a) cand[support[a]] = sol[a];
    if (cand.minCoeff() < 0.0) continue;
    const double r = simplex_kkt_residual(hessian * cand + linear, cand);
    if (r < best_res) {
      best_res = r;
      best = cand;
    }
  }
  return best;
}

// Among all simplex points with the same fitted moments Sigma w, the one with
// the smallest Euclidean norm.
VectorXd minimum_norm_minimizer(const MatrixXd& sig, const VectorXd& w_hat, double tol) {
  const Eigen::Index j = sig.rows();
  ipm::Program prog = simplex_program(j, j, 2.0 * MatrixXd::Identity(j, j), VectorXd::Zero(j));
  prog.eq_matrix.resize(j + 1, j);
  prog.eq_matrix.topRows(j) = sig;
  prog.eq_matrix.row(j).setOnes();
  prog.eq_rhs.resize(j + 1);
  prog.eq_rhs << sig * w_hat, 1.0;
  ipm::Options opt;
  opt.tol = 0.1 * tol;
  // Sigma w_hat is only accurate to the first-stage tolerance.
  opt.consistency_tol = std::max(opt.consistency_tol, 100.0 * tol);
  const ipm::Result res = ipm::solve(prog, VectorXd::Constant(j, 1.0 / j), opt);
  if (res.outcome == ipm::Outcome::kInconsistentEqualities) return w_hat;
  return clean_weights(res.x);
}

}  // namespace

double simplex_kkt_residual(const VectorXd& smooth_gradient, const VectorXd& w, double l1_weight,
                            double zero_tol) {
  const Eigen::Index j = w.size();
  const double center = 1.0 / static_cast<double>(j);
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < j; ++i) {
    const double q = smooth_gradient[i];
    if (w[i] <= zero_tol) {
      // q + nu - l1 - v = 0 with v >= 0 (the kink at 1/J is away from 0).
      lo = std::max(lo, -q + l1_weight);
    } else if (l1_weight > 0.0 && std::abs(w[i] - center) <= kKinkTol) {
      lo = std::max(lo, -q - l1_weight);
      hi = std::min(hi, -q + l1_weight);
    } else {
      const double sign = l1_weight > 0.0 ? (w[i] > center ? 1.0 : -1.0) : 0.0;
      const double nu = -q - l1_weight * sign;
      lo = std::max(lo, nu);
      hi = std::min(hi, nu);
    }
  }
  const double stationarity = std::max(0.0, 0.5 * (lo - hi));
  const double primal = std::max(std::max(0.0, -w.minCoeff()), std::abs(w.sum() - 1.0));
  return std::max(stationarity, primal);
}

WeightSolution solve_scm(const MomentPair& m, double tol) {
  check_tolerance(tol);
  const Eigen::Index j = m.j;
  const double scale = moment_scale(m);
  const MatrixXd sig = m.sigma_hat / scale;
  const VectorXd ups = m.upsilon_hat / scale;

  WeightSolution out;
  if (j == 1) {
    out.w = VectorXd::Ones(1);
    out.status = SolveStatus::kConverged;
  } else {
    ipm::Program prog = simplex_program(j, j, 2.0 * sig, -2.0 * ups);
    ipm::Options opt;
    opt.tol = 0.1 * tol;
    const ipm::Result res = ipm::solve(prog, VectorXd::Constant(j, 1.0 / j), opt);
    out.w = polish_simplex_qp(2.0 * sig, -2.0 * ups, clean_weights(res.x));
    out.iterations = res.iterations;

    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sig, Eigen::EigenvaluesOnly);
    const VectorXd& ev = eig.eigenvalues();
    const bool singular = ev.minCoeff() <= 1e-10 * std::max(ev.maxCoeff(), 1e-300);
    if (singular) {
      const VectorXd w_min = minimum_norm_minimizer(sig, out.w, tol);
      // The solution set is a point exactly when the support face admits no
      // direction that keeps Sigma w and sum(w) fixed.
      std::vector<Eigen::Index> support;
      for (Eigen::Index i = 0; i < j; ++i) {
        if (w_min[i] > 0.0) support.push_back(i);
      }
      MatrixXd face(j + 1, static_cast<Eigen::Index>(support.size()));
      for (std::size_t k = 0; k < support.size(); ++k) {
        face.block(0, static_cast<Eigen::Index>(k), j, 1) = sig.col(support[k]);
        face(j, static_cast<Eigen::Index>(k)) = 1.0;
      }
      Eigen::JacobiSVD<MatrixXd> svd(face);
      svd.setThreshold(1e-10);
      const bool moved = (w_min - out.w).cwiseAbs().maxCoeff() > 1e-6;
      out.non_unique = moved || svd.rank() < static_cast<Eigen::Index>(support.size());
      out.w = w_min;
    }
    const VectorXd grad = 2.0 * (sig * out.w - ups);
    out.kkt_max_residual = simplex_kkt_residual(grad, out.w);
    out.status = status_from(res, out.kkt_max_residual, tol);
  }
  out.objective = out.w.dot(m.sigma_hat * out.w) - 2.0 * m.upsilon_hat.dot(out.w);
  return out;
}

ClosedFormScm scm_closed_form_unconstrained(const MomentPair& m) {
  const Eigen::Index j = m.j;
  Eigen::JacobiSVD<MatrixXd> svd(m.sigma_hat);
  const VectorXd& sv = svd.singularValues();
  const double cond = sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1]
                                              : std::numeric_limits<double>::infinity();
  if (!(cond < 1e12)) {
    throw Error(ErrorCode::kSingularMoment, "sigma_hat is singular or ill-conditioned",
                {{"condition_number", std::isfinite(cond) ? cond : -1.0}});
  }
  const Eigen::LDLT<MatrixXd> ldlt(m.sigma_hat);
  const VectorXd ones = VectorXd::Ones(j);
  const VectorXd inv_one = ldlt.solve(ones);
  const VectorXd inv_ups = ldlt.solve(m.upsilon_hat);
  ClosedFormScm out;
  out.gamma = (ones.dot(inv_ups) - 1.0) / ones.dot(inv_one);
  out.w = inv_ups - out.gamma * inv_one;
  return out;
}

std::string to_string(PenaltyKind kind) {
  return kind == PenaltyKind::kLasso ? "lasso" : "ridge";
}

WeightSolution solve_penalized(const MomentPair& m, PenaltyKind kind, double lambda, double tol) {
  check_tolerance(tol);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda must be finite and >= 0", {{"lambda", lambda}});
  }
  if (lambda == 0.0) return solve_scm(m, tol);

  const Eigen::Index j = m.j;
  const double center = 1.0 / static_cast<double>(j);
  const double scale = moment_scale(m);
  const MatrixXd sig = m.sigma_hat / scale;
  const VectorXd ups = m.upsilon_hat / scale;
  const double lam = lambda / scale;
  // A large penalty swamps the fit term; dividing the objective by it keeps the
  // barrier path and the KKT residual on a unit scale.
  const double norm = std::max(1.0, lam);

  WeightSolution out;
  ipm::Options opt;
  opt.tol = 0.1 * tol;
  if (j == 1) {
    out.w = VectorXd::Ones(1);
    out.status = SolveStatus::kConverged;
  } else if (kind == PenaltyKind::kRidge) {
    const MatrixXd hessian = 2.0 * (sig + lam * MatrixXd::Identity(j, j)) / norm;
    const VectorXd linear = (-2.0 * ups - 2.0 * lam * VectorXd::Constant(j, center)) / norm;
    const ipm::Program prog = simplex_program(j, j, hessian, linear);
    const ipm::Result res = ipm::solve(prog, VectorXd::Constant(j, center), opt);
    out.w = polish_simplex_qp(hessian, linear, clean_weights(res.x));
    out.iterations = res.iterations;
    const VectorXd grad = hessian * out.w + linear;
    out.kkt_max_residual = simplex_kkt_residual(grad, out.w);
    out.status = status_from(res, out.kkt_max_residual, tol);
  } else {
    // Exact epigraph form: variables (w, u) with |w - 1/J| <= u.
    MatrixXd hessian = MatrixXd::Zero(2 * j, 2 * j);
    hessian.topLeftCorner(j, j) = 2.0 * sig / norm;
    VectorXd linear(2 * j);
    linear << -2.0 * ups / norm, VectorXd::Constant(j, lam / norm);
    ipm::Program prog = simplex_program(j, 2 * j, hessian, linear);
    prog.ineq_matrix = MatrixXd::Zero(2 * j, 2 * j);
    prog.ineq_matrix.topLeftCorner(j, j).setIdentity();
    prog.ineq_matrix.topRightCorner(j, j) = -MatrixXd::Identity(j, j);
    prog.ineq_matrix.bottomLeftCorner(j, j) = -MatrixXd::Identity(j, j);
    prog.ineq_matrix.bottomRightCorner(j, j) = -MatrixXd::Identity(j, j);
    prog.ineq_rhs.resize(2 * j);
    prog.ineq_rhs << VectorXd::Constant(j, center), VectorXd::Constant(j, -center);
    VectorXd x0(2 * j);
    x0 << VectorXd::Constant(j, center), VectorXd::Constant(j, 1.0);
    const ipm::Result res = ipm::solve(prog, x0, opt);
    VectorXd w = res.x.head(j);
    // Coordinates resting on the kink come back within the tolerance of 1/J.
    for (Eigen::Index i = 0; i < j; ++i) {
      if (std::abs(w[i] - center) <= 0.1 * kKinkTol) w[i] = center;
    }
    out.w = clean_weights(w);
    out.iterations = res.iterations;
    const VectorXd grad = 2.0 * (sig * out.w - ups) / norm;
    out.kkt_max_residual = simplex_kkt_residual(grad, out.w, lam / norm);
    out.status = status_from(res, out.kkt_max_residual, tol);
  }
  const VectorXd dev = (out.w.array() - center).matrix();
  const double penalty = kind == PenaltyKind::kLasso ? dev.lpNorm<1>() : dev.squaredNorm();
  out.objective =
      out.w.dot(m.sigma_hat * out.w) - 2.0 * m.upsilon_hat.dot(out.w) + lambda * penalty;
  return out;
}

FsPdaFit solve_fspda(const PanelData& panel, int max_terms, bool bic_stop) {
  return solve_fspda(panel.pre_controls(), panel.pre_treated(), max_terms, bic_stop);
}

FsPdaFit solve_fspda(const MatrixXd& controls, const VectorXd& treated, int max_terms,
                     bool bic_stop) {
  const auto t0 = static_cast<int>(controls.rows());
  const auto j = static_cast<int>(controls.cols());
  if (treated.size() != t0) {
    throw Error(ErrorCode::kDimensionMismatch, "treated series and control block differ in length");
  }
  if (max_terms < 1 || max_terms > std::min(j, t0 - 1)) {
    throw Error(ErrorCode::kInvalidArgument, "max_terms must lie in [1, min(J, T0 - 1)]",
                {{"max_terms", max_terms}, {"j", j}, {"t0", t0}});
  }

  const double log_t0 = std::log(static_cast<double>(t0));
  auto bic = [&](double rss, int k) {
    return t0 * std::log(std::max(rss, 1e-300) / t0) + k * log_t0;
  };
  // Rank-checked OLS of `treated` on [1, controls(:, cols)].
  struct Ols {
    bool full_rank = false;
    VectorXd beta;
    double rss = 0.0;
  };
  auto ols = [&](const std::vector<int>& cols) {
    MatrixXd design(t0, static_cast<Eigen::Index>(cols.size()) + 1);
    design.col(0).setOnes();
    for (std::size_t k = 0; k < cols.size(); ++k) {
      design.col(static_cast<Eigen::Index>(k) + 1) = controls.col(cols[k]);
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    Ols out;
    out.full_rank = qr.rank() == design.cols();
    if (out.full_rank) {
      out.beta = qr.solve(treated);
      out.rss = (treated - design * out.beta).squaredNorm();
    }
    return out;
  };

  const double tss = (treated.array() - treated.mean()).matrix().squaredNorm();
  const double rss_floor = 1e-24 * std::max(1.0, treated.squaredNorm());
  std::vector<int> chosen;
  std::vector<bool> used(static_cast<std::size_t>(j), false);
  double current_bic = bic(tss, 0);
  Ols current;
  FsPdaFit fit;
  while (static_cast<int>(chosen.size()) < max_terms) {
    int best = -1;
    Ols best_fit;
    for (int c = 0; c < j; ++c) {
      if (used[static_cast<std::size_t>(c)]) continue;
      std::vector<int> cols = chosen;
      cols.push_back(c);
      Ols cand = ols(cols);
      if (!cand.full_rank) continue;
      if (best < 0 || cand.rss < best_fit.rss) {
        best = c;
        best_fit = std::move(cand);
      }
    }
    if (best < 0) {
      if (chosen.empty()) {
        throw Error(ErrorCode::kRankDeficientDesign,
                    "no control yields a full-rank design with the intercept");
      }
      break;
    }
    const double cand_bic = bic(best_fit.rss, static_cast<int>(chosen.size()) + 1);
    if (bic_stop && !chosen.empty() && !(cand_bic < current_bic)) break;
    chosen.push_back(best);
    used[static_cast<std::size_t>(best)] = true;
    current = std::move(best_fit);
    current_bic = cand_bic;
    fit.bic_path.push_back(cand_bic);
    if (current.rss <= rss_floor) break;  // perfect fit; nothing left to explain
  }

  fit.intercept = current.beta[0];
  fit.coefficients = current.beta.tail(static_cast<Eigen::Index>(chosen.size()));
  fit.rss = current.rss;
  for (int c : chosen) fit.selected.push_back(c + 1);
  return fit;
}

VectorXd fspda_predict(const FsPdaFit& fit, const MatrixXd& controls) {
  VectorXd out = VectorXd::Constant(controls.rows(), fit.intercept);
  for (std::size_t k = 0; k < fit.selected.size(); ++k) {
    const int col = fit.selected[k] - 1;
    if (col < 0 || col >= controls.cols()) {
      throw Error(ErrorCode::kDimensionMismatch, "selected control index outside the panel",
                  {{"index", fit.selected[k]}});
    }
    out += fit.coefficients[static_cast<Eigen::Index>(k)] * controls.col(col);
  }
  return out;
}

}  // namespace scmr
