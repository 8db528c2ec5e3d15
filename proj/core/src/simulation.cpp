#include "scmrelax/simulation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "parallel.hpp"
#include "scmrelax/baselines.hpp"
#include "scmrelax/error.hpp"
#include "scmrelax/moments.hpp"
#include "scmrelax/solver.hpp"
#include "scmrelax/tuning.hpp"

namespace scmr {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

Error config_error(const std::string& field, const std::string& message, nlohmann::json value) {
  return Error(ErrorCode::kInvalidConfig, message, {{"field", field}, {"value", std::move(value)}});
}

// Group-averages w, which keeps Z'w (and so every oracle constraint) intact.
VectorXd within_group_mean(const GroupStructure& g, const VectorXd& w) {
  const VectorXd totals = g.z_matrix().transpose() * w;
  const VectorXd sizes = g.sizes();
  VectorXd out(w.size());
  for (int i = 0; i < g.j(); ++i) {
    const int k = g.membership[static_cast<std::size_t>(i)] - 1;
    out[i] = totals[k] / sizes[k];
  }
  return out;
}

struct Estimate {
  VectorXd w;              // weights, or fsPDA coefficients padded with zeros
  VectorXd post_prediction;
  double tuning = 0.0;
  bool converged = true;
};

Estimate estimate(Method method, const PanelData& panel, const MomentPair& m,
                  const ExperimentOptions& opt) {
  Estimate out;
  CvOptions cv_opt;
  cv_opt.tol = opt.tol;
  auto relax = [&](const Divergence& d) {
    const CvResult cv = cv_select_eta(panel, d, opt.grid_size, cv_opt);
    RelaxationOptions ro;
    ro.tol = opt.tol;
    const RelaxationSolution sol = solve_relaxation(m, d, cv.chosen, ro);
    if (sol.status == SolveStatus::kInfeasible) {
      throw Error(ErrorCode::kInfeasibleRelaxation, "cross-validated radius is infeasible",
                  {{"eta", cv.chosen}});
    }
    out.w = sol.w;
    out.tuning = cv.chosen;
    out.converged = sol.status == SolveStatus::kConverged;
  };
  auto penalized = [&](PenaltyKind kind) {
    const CvResult cv = cv_select_lambda(panel, kind, opt.grid_size, cv_opt);
    const WeightSolution sol = solve_penalized(m, kind, cv.chosen, opt.tol);
    out.w = sol.w;
    out.tuning = cv.chosen;
    out.converged = sol.status == SolveStatus::kConverged;
  };

  switch (method) {
    case Method::kScm: {
      const WeightSolution sol = solve_scm(m, opt.tol);
      out.w = sol.w;
      out.converged = sol.status == SolveStatus::kConverged;
      break;
    }
    case Method::kLasso: penalized(PenaltyKind::kLasso); break;
    case Method::kRidge: penalized(PenaltyKind::kRidge); break;
    case Method::kFsPda: {
      const CvResult cv = cv_select_fspda_terms(panel, 10, cv_opt);
      const FsPdaFit fit = solve_fspda(panel, static_cast<int>(cv.chosen), true);
      out.w = VectorXd::Zero(panel.num_controls());
      for (std::size_t i = 0; i < fit.selected.size(); ++i) {
        out.w[fit.selected[i] - 1] = fit.coefficients[static_cast<Eigen::Index>(i)];
      }
      out.post_prediction = fspda_predict(fit, panel.post_controls());
      out.tuning = cv.chosen;
      return out;
    }
    case Method::kL2Relax: relax(Divergence::l2()); break;
    case Method::kElRelax: relax(Divergence::el()); break;
    case Method::kEntropyRelax: relax(Divergence::entropy()); break;
  }
  out.post_prediction = panel.post_controls() * out.w;
  return out;
}

Divergence target_divergence(Method method) {
  if (method == Method::kElRelax) return Divergence::el();
  if (method == Method::kEntropyRelax) return Divergence::entropy();
  return Divergence::l2();
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

int k_for_mode(KMode mode, int r) {
  switch (mode) {
    case KMode::kLess: return static_cast<int>(std::floor(0.8 * r));
    case KMode::kEqual: return r;
    case KMode::kGreater: return static_cast<int>(std::floor(1.2 * r)) + 1;
  }
  return r;
}

int DgpConfig::resolved_r() const {
  return r ? *r : static_cast<int>(std::floor(std::log(static_cast<double>(t0))));
}

double DgpConfig::resolved_loading_var() const {
  return loading_var ? *loading_var : 3.0 / resolved_r();
}

double DgpConfig::resolved_lambda0_noise() const {
  return lambda0_noise ? *lambda0_noise : 0.1 / std::sqrt(static_cast<double>(resolved_r()));
}

double DgpConfig::resolved_group_noise() const {
  return group_noise ? *group_noise : 0.2 / std::sqrt(static_cast<double>(resolved_r()));
}

void DgpConfig::validate() const {
  if (t0 < 4) throw config_error("t0", "t0 must be >= 4", t0);
  if (t1 < 0) throw config_error("t1", "t1 must be >= 0", t1);
  if (resolved_r() < 1) throw config_error("r", "r must be >= 1", resolved_r());
  // One group leaves no coordinates for the Dirichlet draw.
  if (k < 2) throw config_error("k", "k must be >= 2", k);
  if (j < k) throw config_error("j", "j must be at least k", j);
  if (!(resolved_loading_var() > 0.0)) {
    throw config_error("loading_var", "loading variance must be positive", resolved_loading_var());
  }
  if (!(resolved_lambda0_noise() >= 0.0)) {
    throw config_error("lambda0_noise", "noise half-width must be >= 0", resolved_lambda0_noise());
  }
  if (!(resolved_group_noise() >= 0.0)) {
    throw config_error("group_noise", "noise half-width must be >= 0", resolved_group_noise());
  }
  if (!(std::abs(ar_coef) < 1.0)) throw config_error("ar_coef", "|ar_coef| must be < 1", ar_coef);
}

nlohmann::json to_json(const DgpConfig& cfg) {
  return {{"j", cfg.j},
          {"t0", cfg.t0},
          {"t1", cfg.t1},
          {"r", cfg.resolved_r()},
          {"k", cfg.k},
          {"ar_coef", cfg.ar_coef},
          {"loading_var", cfg.resolved_loading_var()},
          {"lambda0_noise", cfg.resolved_lambda0_noise()},
          {"group_noise", cfg.mode == GroupMode::kApproximate ? cfg.resolved_group_noise() : 0.0},
          {"mode", cfg.mode == GroupMode::kExact ? "exact" : "approx"},
          {"seed", cfg.seed}};
}

SimulatedInstance generate_instance(const DgpConfig& cfg, int rep) {
  cfg.validate();
  if (rep < 0) throw config_error("rep", "replication index must be >= 0", rep);
  const int r = cfg.resolved_r();
  const int k = cfg.k;
  const int j = cfg.j;
  const int periods = cfg.t0 + cfg.t1;

  std::mt19937_64 structural(cfg.seed);
  std::normal_distribution<double> loading(0.0, std::sqrt(cfg.resolved_loading_var()));
  MatrixXd lambda_co(k, r);
  for (int g = 0; g < k; ++g) {
    for (int l = 0; l < r; ++l) lambda_co(g, l) = loading(structural);
  }
  // Symmetric Dirichlet(1) via normalized unit exponentials.
  std::exponential_distribution<double> expo(1.0);
  VectorXd w_g = VectorXd::Zero(k);
  for (int g = 1; g < k; ++g) w_g[g] = expo(structural);
  w_g /= w_g.sum();
  const double a = cfg.resolved_lambda0_noise();
  std::uniform_real_distribution<double> eps(-a, a);
  VectorXd lambda0 = lambda_co.transpose() * w_g;
  for (int l = 0; l < r; ++l) lambda0[l] += a > 0.0 ? eps(structural) : 0.0;

  const GroupStructure groups = GroupStructure::near_equal(j, k);
  MatrixXd loadings(j + 1, r);
  loadings.row(0) = lambda0.transpose();
  loadings.bottomRows(j) = groups.z_matrix() * lambda_co;
  if (cfg.mode == GroupMode::kApproximate) {
    const double b = cfg.resolved_group_noise();
    std::uniform_real_distribution<double> xi(-b, b);
    for (int i = 0; i < j; ++i) {
      for (int l = 0; l < r; ++l) loadings(i + 1, l) += b > 0.0 ? xi(structural) : 0.0;
    }
  }

  std::mt19937_64 stream(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(rep)));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double rho = cfg.ar_coef;
  MatrixXd factors(periods, r);
  for (int l = 0; l < r; ++l) {
    double f = normal(stream) / std::sqrt(1.0 - rho * rho);
    for (int t = 0; t < periods; ++t) {
      if (t > 0) f = rho * f + normal(stream);
      factors(t, l) = f;
    }
  }
  MatrixXd errors(periods, j + 1);
  for (int t = 0; t < periods; ++t) {
    for (int i = 0; i <= j; ++i) errors(t, i) = normal(stream);
  }
  MatrixXd outcomes = factors * loadings.transpose() + errors;

  OracleInputs oracle;
  oracle.lambda_co = lambda_co;
  oracle.lambda0 = lambda0;
  const MatrixXd f_pre = factors.topRows(cfg.t0);
  const MatrixXd omega = f_pre.transpose() * f_pre / static_cast<double>(cfg.t0);
  oracle.omega_f_hat = 0.5 * (omega + omega.transpose());
  oracle.groups = groups;

  return SimulatedInstance{PanelData::from_matrix(std::move(outcomes), cfg.t0),
                           std::move(oracle),
                           std::move(w_g),
                           std::move(factors),
                           std::move(errors),
                           std::move(loadings)};
}

std::string to_string(Method method) {
  switch (method) {
    case Method::kScm: return "SCM";
    case Method::kLasso: return "Lasso";
    case Method::kRidge: return "Ridge";
    case Method::kFsPda: return "fsPDA";
    case Method::kL2Relax: return "L2Relax";
    case Method::kElRelax: return "ELRelax";
    case Method::kEntropyRelax: return "EntropyRelax";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  const std::string n = lower(name);
  if (n == "scm") return Method::kScm;
  if (n == "lasso") return Method::kLasso;
  if (n == "ridge") return Method::kRidge;
  if (n == "fspda") return Method::kFsPda;
  if (n == "l2" || n == "l2relax") return Method::kL2Relax;
  if (n == "el" || n == "elrelax") return Method::kElRelax;
  if (n == "entropy" || n == "entropyrelax") return Method::kEntropyRelax;
  throw Error(ErrorCode::kInvalidArgument, "unknown method", {{"method", name}});
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods{Method::kScm,     Method::kLasso,   Method::kRidge,
                                           Method::kFsPda,   Method::kL2Relax, Method::kElRelax,
                                           Method::kEntropyRelax};
  return methods;
}

OracleTarget oracle_target(const OracleInputs& inp, const Divergence& d, double tol) {
  const bool quadratic = d.kind() == DivergenceKind::kL2;
  if (quadratic) {
    try {
      return {oracle_weights_l2(inp).w, "closed_form"};
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kBoundaryOracle && e.code() != ErrorCode::kSingularCore &&
          e.code() != ErrorCode::kRankDeficient) {
        throw;
      }
    }
  }
  const MomentPair m = oracle_moments(inp);
  const FeasibilityCertificate cert = check_feasibility(m, 0.0, tol);
  RelaxationOptions opt;
  opt.tol = tol;
  opt.certificate = cert;
  auto usable = [&](const RelaxationSolution& sol) {
    return sol.status == SolveStatus::kConverged &&
           (!d.requires_positive() || sol.w.minCoeff() > 0.0);
  };
  if (cert.feasible) {
    const RelaxationSolution sol = solve_relaxation(m, d, 0.0, opt);
    if (usable(sol)) return {within_group_mean(inp.groups, sol.w), "numeric_exact"};
  }
  // lambda0 outside what the simplex can reproduce: use the closest band.
  const double eta = cert.eta_min * (1.0 + 1e-6) + 1e-12 * moment_scale(m);
  const RelaxationSolution sol = solve_relaxation(m, d, eta, opt);
  if (usable(sol)) return {within_group_mean(inp.groups, sol.w), "numeric_band"};
  if (!quadratic) return {oracle_target(inp, Divergence::l2(), tol).w, "l2_fallback"};
  throw Error(ErrorCode::kNumericalFailure, "oracle weights could not be computed",
              {{"eta_min", cert.eta_min}, {"kkt_max_residual", sol.kkt.max_residual()}});
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream os;
  os << "method,prediction_ratio,l1_ratio,l2_ratio,nonconverged\n";
  for (Method method : methods) {
    const MethodSummary& s = per_method.at(method);
    os << to_string(method) << ',' << format_double(s.prediction_ratio) << ','
       << format_double(s.l1_ratio) << ',' << format_double(s.l2_ratio) << ',' << s.nonconverged
       << '\n';
  }
  return os.str();
}

nlohmann::json ExperimentReport::to_json(bool include_reps) const {
  nlohmann::json per = nlohmann::json::object();
  for (Method method : methods) {
    const MethodSummary& s = per_method.at(method);
    nlohmann::json entry = {{"prediction_ratio", s.prediction_ratio},
                            {"l1_ratio", s.l1_ratio},
                            {"l2_ratio", s.l2_ratio},
                            {"nonconverged", s.nonconverged}};
    if (include_reps) {
      nlohmann::json reps = nlohmann::json::array();
      for (const MethodRep& r : s.reps) {
        reps.push_back({{"prediction_ratio", r.prediction_ratio},
                        {"l1_ratio", r.l1_ratio},
                        {"l2_ratio", r.l2_ratio},
                        {"tuning", r.tuning},
                        {"converged", r.converged}});
      }
      entry["reps"] = std::move(reps);
    }
    per[to_string(method)] = std::move(entry);
  }
  return {{"config", scmr::to_json(config)}, {"n_reps", n_reps}, {"per_method", std::move(per)}};
}

ExperimentReport run_experiment(const DgpConfig& cfg, int n_reps, const std::vector<Method>& methods,
                                const ExperimentOptions& options) {
  cfg.validate();
  if (n_reps < 1) throw config_error("reps", "n_reps must be >= 1", n_reps);
  if (cfg.t1 < 1) throw config_error("t1", "experiments need post-treatment periods", cfg.t1);
  if (methods.empty()) throw Error(ErrorCode::kInvalidArgument, "no methods requested");

  // Canonical order, no duplicates.
  std::vector<Method> chosen;
  for (Method m : all_methods()) {
    if (std::find(methods.begin(), methods.end(), m) != methods.end()) chosen.push_back(m);
  }

  std::vector<std::vector<MethodRep>> results(static_cast<std::size_t>(n_reps));
  detail::parallel_for(static_cast<std::size_t>(n_reps), options.workers, [&](std::size_t idx) {
    const int rep = static_cast<int>(idx);
    try {
      const SimulatedInstance inst = generate_instance(cfg, rep);
      const PanelData& panel = inst.panel;
      const MomentPair m = compute_moments(panel);
      const MatrixXd post = panel.post_controls();

      std::map<DivergenceKind, VectorXd> targets;
      const Estimate scm = estimate(Method::kScm, panel, m, options);
      std::vector<MethodRep> row;
      for (Method method : chosen) {
        const Divergence d = target_divergence(method);
        if (!targets.count(d.kind())) targets[d.kind()] = oracle_target(inst.oracle, d, options.tol).w;
        const VectorXd& w_star = targets[d.kind()];
        const VectorXd y_star = post * w_star;
        const Estimate est = method == Method::kScm ? scm : estimate(method, panel, m, options);

        MethodRep r;
        r.prediction_ratio = (est.post_prediction - y_star).squaredNorm() /
                             (scm.post_prediction - y_star).squaredNorm();
        r.l1_ratio = (est.w - w_star).lpNorm<1>() / (scm.w - w_star).lpNorm<1>();
        r.l2_ratio = (est.w - w_star).norm() / (scm.w - w_star).norm();
        r.tuning = est.tuning;
        r.converged = est.converged;
        row.push_back(r);
      }
      results[idx] = std::move(row);
    } catch (const Error& e) {
      nlohmann::json ctx = e.context();
      ctx["replication"] = rep;
      ctx["cause"] = std::string(to_string(e.code()));
      throw Error(e.code(), "replication " + std::to_string(rep) + " failed: " + e.what(), ctx);
    }
  });

  ExperimentReport report;
  report.config = cfg;
  report.n_reps = n_reps;
  report.methods = chosen;
  for (std::size_t mi = 0; mi < chosen.size(); ++mi) {
    MethodSummary s;
    for (const auto& row : results) {
      const MethodRep& r = row[mi];
      s.prediction_ratio += r.prediction_ratio;
      s.l1_ratio += r.l1_ratio;
      s.l2_ratio += r.l2_ratio;
      if (!r.converged) ++s.nonconverged;
      s.reps.push_back(r);
    }
    s.prediction_ratio /= n_reps;
    s.l1_ratio /= n_reps;
    s.l2_ratio /= n_reps;
    report.per_method[chosen[mi]] = std::move(s);
  }
  return report;
}

double empirical_risk(const VectorXd& w, const PanelData& panel, RiskWindow window) {
  if (w.size() != panel.num_controls()) {
    throw Error(ErrorCode::kDimensionMismatch, "weight length differs from the donor pool",
                {{"weights", w.size()}, {"controls", panel.num_controls()}});
  }
  const bool pre = window == RiskWindow::kPre;
  const int n = pre ? panel.t0() : panel.t1();
  if (n == 0) return 0.0;
  const VectorXd gap = pre ? VectorXd(panel.pre_controls() * w - panel.pre_treated())
                           : VectorXd(panel.post_controls() * w - panel.post_treated());
  return gap.squaredNorm() / static_cast<double>(n);
}

}  // namespace scmr
