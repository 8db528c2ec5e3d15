#include "scmrelax/interior_point.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "scmrelax/error.hpp"

namespace scmr::ipm {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ReducedEqualities {
  MatrixXd a;      // rank x n, full row rank
  VectorXd b;
  MatrixXd basis;  // p x rank; maps reduced multipliers back to original rows
  bool consistent = true;
};

ReducedEqualities reduce_equalities(const MatrixXd& a, const VectorXd& b, const Options& opt) {
  ReducedEqualities out;
  const Index p = a.rows();
  if (p == 0) {
    out.a.resize(0, a.cols());
    out.b.resize(0);
    out.basis.resize(0, 0);
    return out;
  }
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU);
  const VectorXd& sv = svd.singularValues();
  const double cutoff = opt.rank_tol * (sv.size() > 0 ? sv[0] : 0.0);
  Index rank = 0;
  while (rank < sv.size() && sv[rank] > cutoff) ++rank;
  out.basis = svd.matrixU().leftCols(rank);
  out.a = out.basis.transpose() * a;
  out.b = out.basis.transpose() * b;
  const VectorXd leftover = b - out.basis * out.b;
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  out.consistent = leftover.size() == 0 || leftover.cwiseAbs().maxCoeff() <= opt.consistency_tol * scale;
  return out;
}

double max_abs(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

// Largest alpha in (0, 1] keeping base + alpha * step >= 0.
double max_step(const VectorXd& base, const VectorXd& step) {
  double alpha = 1.0;
  for (Index i = 0; i < base.size(); ++i) {
    if (step[i] < 0.0) alpha = std::min(alpha, -base[i] / step[i]);
  }
  return alpha;
}

struct Iterate {
  VectorXd x, nu, s, z, v;

  void axpy(double alpha, const Iterate& dir) {
    x += alpha * dir.x;
    nu += alpha * dir.nu;
    s += alpha * dir.s;
    z += alpha * dir.z;
    v += alpha * dir.v;
  }
};

void check_program(const Program& program, const VectorXd& x0) {
  const Index n = program.num_vars;
  if (x0.size() != n || program.num_bounded > n ||
      (program.ineq_matrix.rows() > 0 && program.ineq_matrix.cols() != n) ||
      program.ineq_rhs.size() != program.ineq_matrix.rows() ||
      (program.eq_matrix.rows() > 0 && program.eq_matrix.cols() != n) ||
      program.eq_rhs.size() != program.eq_matrix.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "interior-point program dimensions are inconsistent");
  }
}

// Mehrotra predictor-corrector iterations from `it`, with a backtracking
// search on the squared norm of the perturbed KKT residual.
Result primal_dual(const Program& program, const ReducedEqualities& eq, Iterate it,
                   const Options& opt) {
  const Index n = program.num_vars;
  const Index nb = program.num_bounded;
  const MatrixXd& g_mat = program.ineq_matrix;
  const VectorXd& h_vec = program.ineq_rhs;
  const Index m = g_mat.rows();
  const Index p = eq.a.rows();
  const MatrixXd& a_mat = eq.a;
  const VectorXd& b_vec = eq.b;
  const double comp_count = static_cast<double>(m + nb);

  Result result;
  VectorXd grad(n);
  MatrixXd hess(n, n);

  struct Residuals {
    VectorXd d, p, i, cs, cx;
    double norm2(double tau) const {
      return d.squaredNorm() + p.squaredNorm() + i.squaredNorm() +
             (cs.array() - tau).matrix().squaredNorm() + (cx.array() - tau).matrix().squaredNorm();
    }
  };
  // Also leaves the Hessian at `at` in `hess`.
  auto residuals = [&](const Iterate& at) {
    program.objective.derivatives(at.x, grad, hess);
    Residuals r;
    r.d = grad;
    if (p > 0) r.d.noalias() += a_mat.transpose() * at.nu;
    if (m > 0) r.d.noalias() += g_mat.transpose() * at.z;
    r.d.head(nb) -= at.v;
    r.p = p > 0 ? VectorXd(a_mat * at.x - b_vec) : VectorXd(0);
    r.i = m > 0 ? VectorXd(g_mat * at.x + at.s - h_vec) : VectorXd(0);
    r.cs = at.s.cwiseProduct(at.z);
    r.cx = at.x.head(nb).cwiseProduct(at.v);
    return r;
  };

  MatrixXd kkt(n + p, n + p);
  VectorXd rhs(n + p);
  double best_merit = std::numeric_limits<double>::infinity();
  int since_improvement = 0;

  Residuals res = residuals(it);
  for (int iter = 0; iter <= opt.max_iterations; ++iter) {
    const double mu = comp_count > 0 ? (res.cs.sum() + res.cx.sum()) / comp_count : 0.0;
    result.dual_residual = max_abs(res.d);
    result.primal_residual = std::max(max_abs(res.p), max_abs(res.i));
    result.complementarity = std::max(max_abs(res.cs), max_abs(res.cx));
    result.iterations = iter;

    if (result.dual_residual <= opt.tol && result.primal_residual <= opt.tol &&
        result.complementarity <= opt.tol) {
      result.outcome = Outcome::kConverged;
      break;
    }
    if (iter == opt.max_iterations) {
      result.outcome = Outcome::kMaxIterations;
      break;
    }
    const double merit =
        std::max({result.dual_residual, result.primal_residual, result.complementarity});
    if (merit < 0.5 * best_merit) {
      best_merit = merit;
      since_improvement = 0;
    } else if (++since_improvement > 60) {
      result.outcome = Outcome::kStalled;
      break;
    }

    // Reduced Newton matrix: H + G' diag(z/s) G + diag_B(v/x).
    kkt.setZero();
    auto k11 = kkt.topLeftCorner(n, n);
    k11 = hess;
    if (m > 0) {
      const VectorXd d = it.z.cwiseQuotient(it.s);
      k11.noalias() += g_mat.transpose() * d.asDiagonal() * g_mat;
    }
    for (Index i = 0; i < nb; ++i) k11(i, i) += it.v[i] / it.x[i];
    if (p > 0) {
      kkt.topRightCorner(n, p) = a_mat.transpose();
      kkt.bottomLeftCorner(p, n) = a_mat;
    }
    const Eigen::PartialPivLU<MatrixXd> lu(kkt);

    auto direction = [&](const VectorXd& r_s, const VectorXd& r_x) {
      rhs.head(n) = -res.d;
      if (m > 0) {
        rhs.head(n).noalias() -=
            g_mat.transpose() * ((-r_s + it.z.cwiseProduct(res.i)).cwiseQuotient(it.s));
      }
      rhs.head(nb) -= r_x.cwiseQuotient(it.x.head(nb));
      if (p > 0) rhs.tail(p) = -res.p;
      VectorXd sol = lu.solve(rhs);
      sol += lu.solve(rhs - kkt * sol);  // one step of iterative refinement
      Iterate dir;
      dir.x = sol.head(n);
      dir.nu = sol.tail(p);
      if (m > 0) {
        dir.s = -res.i - g_mat * dir.x;
        dir.z = (-r_s - it.z.cwiseProduct(dir.s)).cwiseQuotient(it.s);
      } else {
        dir.s.resize(0);
        dir.z.resize(0);
      }
      dir.v = (-r_x - it.v.cwiseProduct(dir.x.head(nb))).cwiseQuotient(it.x.head(nb));
      return dir;
    };
    auto boundary_step = [&](const Iterate& dir) {
      const double ap = std::min(max_step(it.s, dir.s), max_step(it.x.head(nb), dir.x.head(nb)));
      const double ad = std::min(max_step(it.z, dir.z), max_step(it.v, dir.v));
      return std::min(ap, ad);
    };

    // Predictor (affine scaling).
    const Iterate aff = direction(res.cs, res.cx);
    const double alpha_aff = boundary_step(aff);
    double mu_aff = 0.0;
    if (comp_count > 0) {
      mu_aff = ((it.s + alpha_aff * aff.s).dot(it.z + alpha_aff * aff.z) +
                (it.x.head(nb) + alpha_aff * aff.x.head(nb)).dot(it.v + alpha_aff * aff.v)) /
               comp_count;
    }
    const double sigma = mu > 0.0 ? std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0) : 0.0;
    const double tau = sigma * mu;

    // Mehrotra corrector first; if the backtracking search cannot reduce the
    // residual along it, fall back to the plain centered Newton direction.
    const double merit0 = res.norm2(tau);
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      VectorXd r_s = res.cs.array() - tau;
      VectorXd r_x = res.cx.array() - tau;
      if (attempt == 0) {
        if (m > 0) r_s += aff.s.cwiseProduct(aff.z);
        r_x += aff.x.head(nb).cwiseProduct(aff.v);
      }
      const Iterate dir = direction(r_s, r_x);
      double alpha = std::min(1.0, opt.step_fraction * boundary_step(dir));
      for (int bt = 0; bt < 40; ++bt, alpha *= 0.5) {
        Iterate trial = it;
        trial.axpy(alpha, dir);
        if (!trial.x.allFinite() || (nb > 0 && !(trial.x.head(nb).minCoeff() > 0.0))) continue;
        Residuals tr = residuals(trial);
        const double merit_trial = tr.norm2(tau);
        // A breakdown (0/0 near the boundary) must never replace a finite iterate.
        if (!std::isfinite(merit_trial)) continue;
        if (merit_trial <= (1.0 - 1e-4 * alpha) * merit0 || (attempt == 1 && bt == 39)) {
          it = std::move(trial);
          res = std::move(tr);
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      result.outcome = Outcome::kStalled;
      break;
    }
  }

  result.x = it.x;
  result.eq_dual = p > 0 ? VectorXd(eq.basis * it.nu) : VectorXd::Zero(program.eq_matrix.rows());
  result.ineq_dual = it.z;
  result.bound_dual = it.v;
  return result;
}

}  // namespace

Result solve(const Program& program, const VectorXd& x0, const Options& opt) {
  check_program(program, x0);
  const Index nb = program.num_bounded;
  const Index m = program.ineq_matrix.rows();
  const ReducedEqualities eq = reduce_equalities(program.eq_matrix, program.eq_rhs, opt);
  if (!eq.consistent) {
    Result result;
    result.outcome = Outcome::kInconsistentEqualities;
    result.x = x0;
    return result;
  }

  Iterate it;
  it.x = x0;
  for (Index i = 0; i < nb; ++i) {
    if (!(it.x[i] > 0.0)) it.x[i] = 1.0 / static_cast<double>(nb);
  }
  // Keep genuine slack where the start satisfies a row, so a feasible start
  // stays feasible.
  it.s = program.ineq_rhs - program.ineq_matrix * it.x;
  for (Index i = 0; i < m; ++i) {
    if (!(it.s[i] > 1e-8)) it.s[i] = 0.1;
  }
  it.z = VectorXd::Ones(m);
  it.v = VectorXd::Ones(nb);
  it.nu = VectorXd::Zero(eq.a.rows());
  return primal_dual(program, eq, std::move(it), opt);
}

Result solve_barrier(const Program& program, const VectorXd& x0, const Options& opt) {
  check_program(program, x0);
  if (!program.objective.value) {
    throw Error(ErrorCode::kInvalidArgument, "barrier method needs the objective value");
  }
  const Index n = program.num_vars;
  const Index nb = program.num_bounded;
  const MatrixXd& g_mat = program.ineq_matrix;
  const VectorXd& h_vec = program.ineq_rhs;
  const Index m = g_mat.rows();

  Result result;
  result.x = x0;
  const ReducedEqualities eq = reduce_equalities(program.eq_matrix, program.eq_rhs, opt);
  if (!eq.consistent) {
    result.outcome = Outcome::kInconsistentEqualities;
    return result;
  }
  const Index p = eq.a.rows();
  const MatrixXd& a_mat = eq.a;
  const VectorXd& b_vec = eq.b;
  if (nb > 0 && !(x0.head(nb).minCoeff() > 0.0)) {
    result.outcome = Outcome::kInfeasibleStart;
    return result;
  }

  // The slacks s = h - G x are carried as variables with G x + s = h, so that
  // 1/s stays accurate when s is tiny (computing h - G x would cancel).
  VectorXd x = x0;
  VectorXd s = h_vec - g_mat * x0;
  for (Index i = 0; i < m; ++i) {
    if (!(s[i] > 1e-8)) s[i] = 1.0;
  }
  VectorXd nu = VectorXd::Zero(p);
  VectorXd lambda = s.cwiseInverse();

  VectorXd grad(n);
  MatrixXd hess(n, n);
  auto barrier_value = [&](const VectorXd& y, const VectorXd& sl, double t) {
    // A step that rounds a tiny coordinate to zero leaves the domain.
    if (nb > 0 && !(y.head(nb).minCoeff() > 0.0)) return std::numeric_limits<double>::infinity();
    if (m > 0 && !(sl.minCoeff() > 0.0)) return std::numeric_limits<double>::infinity();
    double val = t * program.objective.value(y) - sl.array().log().sum();
    if (nb > 0) val -= y.head(nb).array().log().sum();
    return val;
  };
  // x-gradient of t f - sum log(x_B); fills hess with the objective Hessian.
  auto x_gradient = [&](const VectorXd& y, double t) {
    program.objective.derivatives(y, grad, hess);
    VectorXd g = t * grad;
    g.head(nb) -= y.head(nb).cwiseInverse();
    return g;
  };
  auto infeasibility = [&](const VectorXd& y, const VectorXd& sl) {
    double r = 0.0;
    if (p > 0) r = std::max(r, max_abs(a_mat * y - b_vec));
    if (m > 0) r = std::max(r, max_abs(g_mat * y + sl - h_vec));
    return r;
  };
  // Norm of the barrier KKT residual at (y, sl) for fixed multipliers.
  auto kkt_norm = [&](const VectorXd& y, const VectorXd& sl, const VectorXd& mult_eq,
                      const VectorXd& mult_in, double t) {
    VectorXd rx = x_gradient(y, t);
    if (p > 0) rx.noalias() += a_mat.transpose() * mult_eq;
    if (m > 0) rx.noalias() += g_mat.transpose() * mult_in;
    const VectorXd rs = mult_in - sl.cwiseInverse();
    double sq = rx.squaredNorm() + rs.squaredNorm();
    if (p > 0) sq += (a_mat * y - b_vec).squaredNorm();
    if (m > 0) sq += (g_mat * y + sl - h_vec).squaredNorm();
    return std::sqrt(sq);
  };

  const double t_final = 2.0 / opt.tol;
  double t = 1.0;
  MatrixXd kkt(n + p, n + p);
  VectorXd rhs(n + p);
  int newton_steps = 0;
  bool stalled = false;
  double stationarity = std::numeric_limits<double>::infinity();
  for (int stage = 0; stage < 200 && !stalled; ++stage) {
    const bool last = t >= t_final;
    double best = std::numeric_limits<double>::infinity();
    int stuck = 0;
    for (int step = 0; step < 50; ++step, ++newton_steps) {
      const VectorXd gx = x_gradient(x, t);
      const VectorXd r_h = m > 0 ? VectorXd(h_vec - g_mat * x - s) : VectorXd(0);
      const VectorXd inv_s2 = s.cwiseAbs2().cwiseInverse();

      // Reduced Newton system after eliminating ds = r_h - G dx.
      kkt.setZero();
      auto k11 = kkt.topLeftCorner(n, n);
      k11 = t * hess;
      for (Index i = 0; i < nb; ++i) k11(i, i) += 1.0 / (x[i] * x[i]);
      rhs.head(n) = -gx;
      if (m > 0) {
        k11.noalias() += g_mat.transpose() * inv_s2.asDiagonal() * g_mat;
        rhs.head(n).noalias() -= g_mat.transpose() * (s - r_h).cwiseProduct(inv_s2);
      }
      if (p > 0) {
        kkt.topRightCorner(n, p) = a_mat.transpose();
        kkt.bottomLeftCorner(p, n) = a_mat;
        rhs.tail(p) = b_vec - a_mat * x;
      }
      const Eigen::PartialPivLU<MatrixXd> lu(kkt);
      VectorXd sol = lu.solve(rhs);
      sol += lu.solve(rhs - kkt * sol);
      if (!sol.allFinite()) {
        stalled = true;
        break;
      }
      const VectorXd dx = sol.head(n);
      const VectorXd nu_new = sol.tail(p);
      const VectorXd ds = m > 0 ? VectorXd(r_h - g_mat * dx) : VectorXd(0);
      const VectorXd lambda_new =
          m > 0 ? VectorXd((g_mat * dx + s - r_h).cwiseProduct(inv_s2)) : VectorXd(0);

      // Stationarity in x with the fresh multipliers, in original units.
      VectorXd rd = gx;
      if (p > 0) rd.noalias() += a_mat.transpose() * nu_new;
      if (m > 0) rd.noalias() += g_mat.transpose() * lambda_new;
      const double rd_max = max_abs(rd) / t;
      const double gap = infeasibility(x, s);
      const double decrement = -(gx.dot(dx) - (m > 0 ? s.cwiseInverse().dot(ds) : 0.0));

      if (gap <= opt.tol) {
        const bool centered = last ? rd_max <= opt.tol : decrement <= 1e-8;
        if (centered) {
          nu = nu_new;
          lambda = lambda_new;
          stationarity = rd_max;
          break;
        }
        if (last) {
          stuck = rd_max > 0.9 * best ? stuck + 1 : 0;
          best = std::min(best, rd_max);
          if (stuck >= 3) {
            nu = nu_new;
            lambda = lambda_new;
            stationarity = rd_max;
            break;
          }
        }
      }

      double alpha = 0.99 * std::min(max_step(x.head(nb), dx.head(nb)), max_step(s, ds));
      alpha = std::min(1.0, alpha);
      const double phi0 = barrier_value(x, s, t);
      const double r0 = kkt_norm(x, s, nu_new, lambda_new, t);
      bool accepted = false;
      for (int bt = 0; bt < 60; ++bt, alpha *= 0.5) {
        const VectorXd xt = x + alpha * dx;
        const VectorXd st = s + alpha * ds;
        if (!xt.allFinite() || !st.allFinite()) continue;
        if ((nb > 0 && !(xt.head(nb).minCoeff() > 0.0)) || (m > 0 && !(st.minCoeff() > 0.0))) continue;
        bool ok = gap <= opt.tol && barrier_value(xt, st, t) <= phi0 - 0.01 * alpha * decrement;
        // Infeasible start, or the Armijo test lost to rounding.
        if (!ok) ok = kkt_norm(xt, st, nu_new, lambda_new, t) <= (1.0 - 0.01 * alpha) * r0;
        if (ok) {
          x = xt;
          s = st;
          nu = nu_new;
          lambda = lambda_new;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        stalled = !last;
        break;
      }
    }
    if (last) break;
    t = std::min(10.0 * t, t_final);
  }

  // Multipliers of the original program: z = lambda / t, v = 1 / (t x_B), nu / t.
  result.x = x;
  result.iterations = newton_steps;
  result.ineq_dual = lambda / t;
  result.bound_dual = nb > 0 ? VectorXd(x.head(nb).cwiseInverse() / t) : VectorXd(0);
  const VectorXd nu_scaled = nu / t;
  result.eq_dual =
      p > 0 ? VectorXd(eq.basis * nu_scaled) : VectorXd::Zero(program.eq_matrix.rows());
  result.dual_residual = stationarity;
  result.primal_residual = infeasibility(x, s);
  result.complementarity = 0.0;
  if (m > 0) result.complementarity = max_abs(s.cwiseProduct(result.ineq_dual));
  if (nb > 0) result.complementarity = std::max(result.complementarity, 1.0 / t);
  const bool ok = result.dual_residual <= opt.tol && result.primal_residual <= opt.tol &&
                  result.complementarity <= opt.tol;
  result.outcome =
      ok ? Outcome::kConverged : (stalled ? Outcome::kStalled : Outcome::kMaxIterations);
  if (ok) return result;
  if (!x.allFinite() || !s.allFinite() || !result.ineq_dual.allFinite() ||
      !result.bound_dual.allFinite() || !nu_scaled.allFinite()) {
    return result;
  }

  // Near-degenerate instances can leave the barrier short of the target;
  // a primal-dual pass from its last iterate sometimes finishes them.
  Iterate it;
  it.x = x;
  it.s = s;
  it.z = result.ineq_dual;
  it.v = result.bound_dual;
  it.nu = nu_scaled;
  Result polished = primal_dual(program, eq, std::move(it), opt);
  polished.iterations += newton_steps;
  const auto worst = [](const Result& r) {
    return std::max({r.dual_residual, r.primal_residual, r.complementarity});
  };
  return worst(polished) < worst(result) ? polished : result;
}

}  // namespace scmr::ipm
