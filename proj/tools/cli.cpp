#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scmrelax/baselines.hpp"
#include "scmrelax/error.hpp"
#include "scmrelax/moments.hpp"
#include "scmrelax/oracle.hpp"
#include "scmrelax/panel.hpp"
#include "scmrelax/serialize.hpp"
#include "scmrelax/simulation.hpp"
#include "scmrelax/solver.hpp"
#include "scmrelax/tuning.hpp"
#include "svg.hpp"

namespace scmr::cli {

namespace {

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

constexpr int kExitError = 2;
constexpr int kExitNotConverged = 3;

struct DataFlags {
  std::string data;
  std::string treated;
  std::string treatment_time;
  std::string method = "l2";
  std::optional<double> eta;
  std::optional<double> lambda;
  std::optional<int> max_terms;
  bool cv = false;
  int grid_size = 20;
  bool standardize = false;
  std::optional<int> yoy;
  bool levels = false;
  std::string out = ".";
  double tol = 1e-8;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--data", f.data, "Wide-format CSV (time,<unit1>,...)")->required();
  cmd->add_option("--treated", f.treated, "Column label of the treated unit")->required();
  cmd->add_option("--treatment-time", f.treatment_time, "Label of the first treated period")
      ->required();
  cmd->add_option("--method", f.method, "scm|lasso|ridge|fspda|l2|el|entropy|cr:<gamma>");
  cmd->add_flag("--standardize", f.standardize, "Scale-only standardization before estimation");
  cmd->add_option("--yoy", f.yoy, "Estimate on year-over-year growth with this lag")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--grid-size", f.grid_size, "Cross-validation grid size")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--tol", f.tol, "Solver tolerance");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kIo, "cannot write file", {{"path", path.string()}});
  os << content;
  if (!os) throw Error(ErrorCode::kIo, "write failed", {{"path", path.string()}});
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create output directory", {{"path", dir}});
  return fs::path(dir);
}

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

bool is_relaxation(const std::string& method) {
  return method == "l2" || method == "el" || method == "entropy" || method.rfind("cr:", 0) == 0;
}

// Panels the estimator sees: the working panel (levels or growth) and the
// optionally standardized copy the weights are fitted on.
struct Prepared {
  PanelData raw;
  PanelData work;
  PanelData fit;
  std::optional<ScaleVector> scales;
};

Prepared prepare(const DataFlags& f) {
  PanelData raw = load_panel_csv(f.data, f.treated, f.treatment_time);
  PanelData work = f.yoy ? yoy_growth(raw, *f.yoy) : raw;
  if (f.standardize) {
    auto [fit, scales] = standardize(work);
    return {std::move(raw), std::move(work), std::move(fit), std::move(scales)};
  }
  PanelData fit = work;
  return {std::move(raw), std::move(work), std::move(fit), std::nullopt};
}

struct Fit {
  json weights;            // weights.json body
  VectorXd prediction;     // every period of the working panel
  json tuning;
  bool converged = true;
};

Fit fit_method(const DataFlags& f, const Prepared& p) {
  const CvOptions cv_opt{f.tol, 1, std::nullopt};
  const MomentPair m = compute_moments(p.fit);
  Fit out;
  VectorXd w;
  auto finish_weights = [&](json body) {
    VectorXd effective = p.scales ? destandardize_weights(w, *p.scales) : w;
    if (p.scales) body["effective_w"] = vector_json(effective);
    body["units"] = std::vector<std::string>(p.work.unit_labels().begin() + 1,
                                             p.work.unit_labels().end());
    out.weights = std::move(body);
    out.prediction = p.work.controls() * effective;
  };

  if (f.method == "scm") {
    const WeightSolution sol = solve_scm(m, f.tol);
    w = sol.w;
    out.converged = sol.status == SolveStatus::kConverged;
    out.tuning = json::object();
    finish_weights(to_json(sol));
  } else if (f.method == "lasso" || f.method == "ridge") {
    const PenaltyKind kind = f.method == "lasso" ? PenaltyKind::kLasso : PenaltyKind::kRidge;
    double lambda = 0.0;
    if (f.lambda) {
      lambda = *f.lambda;
      out.tuning = {{"lambda", lambda}};
    } else {
      const CvResult cv = cv_select_lambda(p.fit, kind, f.grid_size, cv_opt);
      lambda = cv.chosen;
      out.tuning = {{"lambda", lambda}, {"cv", to_json(cv)}};
    }
    const WeightSolution sol = solve_penalized(m, kind, lambda, f.tol);
    w = sol.w;
    out.converged = sol.status == SolveStatus::kConverged;
    json body = to_json(sol);
    body["lambda"] = lambda;
    finish_weights(std::move(body));
  } else if (f.method == "fspda") {
    // OLS is scale equivariant, so fsPDA always runs on the working panel.
    int terms = 0;
    if (f.max_terms) {
      terms = *f.max_terms;
      out.tuning = {{"max_terms", terms}};
    } else {
      const CvResult cv = cv_select_fspda_terms(p.work, 10, cv_opt);
      terms = static_cast<int>(cv.chosen);
      out.tuning = {{"max_terms", terms}, {"cv", to_json(cv)}};
    }
    const FsPdaFit fit = solve_fspda(p.work, terms, true);
    json body = to_json(fit);
    body["units"] = std::vector<std::string>(p.work.unit_labels().begin() + 1,
                                             p.work.unit_labels().end());
    body["status"] = "Converged";
    out.weights = std::move(body);
    out.prediction = fspda_predict(fit, p.work.controls());
  } else if (is_relaxation(f.method)) {
    const Divergence d = Divergence::parse(f.method);
    double eta = 0.0;
    if (f.eta) {
      eta = *f.eta;
      out.tuning = {{"eta", eta}};
    } else {
      const CvResult cv = cv_select_eta(p.fit, d, f.grid_size, cv_opt);
      eta = cv.chosen;
      out.tuning = {{"eta", eta}, {"cv", to_json(cv)}};
    }
    RelaxationOptions ro;
    ro.tol = f.tol;
    const RelaxationSolution sol = solve_relaxation(m, d, eta, ro);
    if (sol.status == SolveStatus::kInfeasible) {
      throw Error(ErrorCode::kInfeasibleRelaxation, "band radius is below the feasible minimum",
                  {{"eta", eta}, {"certificate", to_json(*sol.certificate)}});
    }
    w = sol.w;
    out.converged = sol.status == SolveStatus::kConverged;
    finish_weights(to_json(sol));
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown method", {{"method", f.method}});
  }
  return out;
}

int cmd_estimate(const DataFlags& f, std::ostream& out) {
  if (f.eta && f.cv) throw Error(ErrorCode::kInvalidArgument, "--eta and --cv are exclusive");
  if (f.levels && !f.yoy) throw Error(ErrorCode::kInvalidArgument, "--levels requires --yoy");
  const Prepared p = prepare(f);
  const Fit fit = fit_method(f, p);

  const PanelData& work = p.work;
  const int t0 = work.t0();
  const VectorXd observed_work = work.treated();
  VectorXd observed = observed_work;
  VectorXd predicted = fit.prediction;
  if (f.levels) {
    // Working row i is level row i + lag; pre-treatment fits use the observed
    // base, post-treatment values chain on the reconstruction.
    const int lag = *f.yoy;
    const VectorXd raw_treated = p.raw.treated();
    observed = raw_treated.tail(work.num_periods());
    for (int i = 0; i < t0; ++i) predicted[i] = (1.0 + fit.prediction[i]) * raw_treated[i];
    predicted.tail(work.t1()) =
        reconstruct_levels(fit.prediction.tail(work.t1()), raw_treated, p.raw.t0(), lag);
  }
  const VectorXd gap = observed - predicted;

  const auto pre_fit = (observed_work.head(t0) - fit.prediction.head(t0)).squaredNorm() / t0;
  const int t1 = work.t1();
  const double post_fit =
      t1 > 0 ? (observed_work.tail(t1) - fit.prediction.tail(t1)).squaredNorm() / t1 : 0.0;
  const VectorXd ate = gap.tail(t1);
  const double post_total = observed.tail(t1).sum();
  json summary = {{"method", f.method},
                  {"scale", f.levels ? "levels" : (f.yoy ? "growth" : "levels")},
                  {"t0", t0},
                  {"t1", t1},
                  {"in_sample_risk", pre_fit},
                  {"out_of_sample_risk", post_fit},
                  {"ate_path", to_std(ate)},
                  {"ate_mean", t1 > 0 ? ate.mean() : 0.0},
                  {"cumulative_effect", ate.sum()},
                  {"effect_ratio", post_total != 0.0 ? ate.sum() / post_total : 0.0},
                  {"tuning", fit.tuning},
                  {"standardized", f.standardize},
                  {"converged", fit.converged}};
  if (f.yoy) summary["yoy_lag"] = *f.yoy;
  if (p.scales) summary["scales"] = to_json(*p.scales);

  std::ostringstream csv;
  csv << "time,observed,predicted,gap\n";
  for (int i = 0; i < work.num_periods(); ++i) {
    csv << work.time_labels()[static_cast<std::size_t>(i)] << ',' << fmt(observed[i]) << ','
        << fmt(predicted[i]) << ',' << fmt(gap[i]) << '\n';
  }

  const fs::path dir = ensure_dir(f.out);
  write_file(dir / "weights.json", fit.weights.dump(2) + "\n");
  write_file(dir / "counterfactual.csv", csv.str());
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  write_file(dir / "gap.svg",
             gap_chart_svg(work.time_labels(), to_std(observed), to_std(predicted), t0,
                           f.treated + ": observed vs counterfactual (" + f.method + ")"));
  out << summary.dump() << "\n";
  if (!fit.converged) {
    throw Error(ErrorCode::kNumericalFailure, "solver did not converge; artifacts were written",
                {{"method", f.method}, {"exit_code", kExitNotConverged}});
  }
  return 0;
}

int cmd_cv(const DataFlags& f, std::ostream& out) {
  const Prepared p = prepare(f);
  const CvOptions cv_opt{f.tol, 1, std::nullopt};
  CvResult cv;
  if (f.method == "lasso" || f.method == "ridge") {
    cv = cv_select_lambda(p.fit, f.method == "lasso" ? PenaltyKind::kLasso : PenaltyKind::kRidge,
                          f.grid_size, cv_opt);
  } else if (f.method == "fspda") {
    cv = cv_select_fspda_terms(p.work, 10, cv_opt);
  } else if (is_relaxation(f.method)) {
    cv = cv_select_eta(p.fit, Divergence::parse(f.method), f.grid_size, cv_opt);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "method has no tuning parameter", {{"method", f.method}});
  }
  json doc = to_json(cv);
  doc["method"] = f.method;
  const fs::path dir = ensure_dir(f.out);
  write_file(dir / "cv.json", doc.dump(2) + "\n");
  out << doc.dump() << "\n";
  return 0;
}

struct SimFlags {
  int j = 50;
  int t0 = 50;
  int t1 = 50;
  std::string k_mode = "lt";
  std::string mode = "exact";
  int reps = 100;
  std::uint64_t seed = 20240601;
  std::string methods = "scm,lasso,ridge,fspda,l2,el,entropy";
  std::string out = ".";
  int workers = 1;
  int grid_size = 20;
  bool full_sweep = false;
  bool raw = false;
};

std::string flag_for_field(const std::string& field) {
  if (field == "k" || field == "r") return "--k-mode";
  if (field == "reps") return "--reps";
  if (field == "j") return "--j";
  if (field == "t0") return "--t0";
  if (field == "t1") return "--t1";
  return "--" + field;
}

KMode parse_k_mode(const std::string& s) {
  if (s == "lt") return KMode::kLess;
  if (s == "eq") return KMode::kEqual;
  if (s == "gt") return KMode::kGreater;
  throw Error(ErrorCode::kInvalidConfig, "k-mode must be lt, eq or gt", {{"flag", "--k-mode"}, {"value", s}});
}

int cmd_simulate(const SimFlags& f, std::ostream& out) {
  std::vector<Method> methods;
  std::stringstream ss(f.methods);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) methods.push_back(parse_method(item));
  }
  if (f.mode != "exact" && f.mode != "approx") {
    throw Error(ErrorCode::kInvalidConfig, "mode must be exact or approx", {{"flag", "--mode"}, {"value", f.mode}});
  }
  const KMode k_mode = parse_k_mode(f.k_mode);
  ExperimentOptions opt;
  opt.workers = f.workers;
  opt.grid_size = f.grid_size;
  const fs::path dir = ensure_dir(f.out);

  auto run_one = [&](int j, int t0, KMode km, const std::string& stem) {
    DgpConfig cfg;
    cfg.j = j;
    cfg.t0 = t0;
    cfg.t1 = f.t1;
    cfg.k = k_for_mode(km, cfg.resolved_r());
    cfg.mode = f.mode == "exact" ? GroupMode::kExact : GroupMode::kApproximate;
    cfg.seed = f.seed;
    try {
      const ExperimentReport report = run_experiment(cfg, f.reps, methods, opt);
      write_file(dir / (stem + ".csv"), report.to_csv());
      write_file(dir / (stem + ".json"), report.to_json(f.raw).dump(2) + "\n");
      return report;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInvalidConfig) throw;
      json ctx = e.context();
      if (ctx.contains("field")) ctx["flag"] = flag_for_field(ctx["field"].get<std::string>());
      throw Error(e.code(), e.what(), ctx);
    }
  };

  if (!f.full_sweep) {
    const ExperimentReport report = run_one(f.j, f.t0, k_mode, "report");
    out << report.to_csv();
    return 0;
  }
  std::ostringstream sweep;
  sweep << "j,t0,k_mode,method,prediction_ratio,l1_ratio,l2_ratio,nonconverged\n";
  const char* names[] = {"lt", "eq", "gt"};
  const KMode modes[] = {KMode::kLess, KMode::kEqual, KMode::kGreater};
  for (int j : {50, 100, 200}) {
    for (int t0 : {j / 2, j, 2 * j}) {
      for (int mi = 0; mi < 3; ++mi) {
        const std::string stem =
            "report_j" + std::to_string(j) + "_t" + std::to_string(t0) + "_" + names[mi];
        const ExperimentReport report = run_one(j, t0, modes[mi], stem);
        for (Method m : report.methods) {
          const MethodSummary& s = report.per_method.at(m);
          sweep << j << ',' << t0 << ',' << names[mi] << ',' << to_string(m) << ','
                << fmt(s.prediction_ratio) << ',' << fmt(s.l1_ratio) << ',' << fmt(s.l2_ratio)
                << ',' << s.nonconverged << '\n';
        }
      }
    }
  }
  write_file(dir / "sweep.csv", sweep.str());
  out << sweep.str();
  return 0;
}

int cmd_oracle(const std::string& input, const std::string& divergence, const std::string& out_path,
               std::ostream& out) {
  std::ifstream is(input);
  if (!is) throw Error(ErrorCode::kIo, "cannot open oracle input", {{"path", input}});
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("oracle input is not JSON: ") + e.what());
  }
  const OracleInputs inp = oracle_inputs_from_json(doc);
  const Divergence d = Divergence::parse(divergence);
  json result;
  if (d.kind() == DivergenceKind::kL2) {
    try {
      result = to_json(oracle_weights_l2(inp));
      result["method"] = "closed_form";
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kBoundaryOracle) throw;
      result = to_json(oracle_weights_g(inp, d));
      result["method"] = "numeric";
      result["closed_form_error"] = e.to_json();
    }
  } else {
    result = to_json(oracle_weights_g(inp, d));
    result["method"] = "numeric";
  }
  if (!out_path.empty()) write_file(out_path, result.dump(2) + "\n");
  out << result.dump() << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic control relaxation estimators"};
  app.require_subcommand(1);

  DataFlags est;
  CLI::App* estimate = app.add_subcommand("estimate", "Estimate weights and counterfactuals");
  add_data_flags(estimate, est);
  estimate->add_option("--eta", est.eta, "Band radius for relaxation methods")
      ->check(CLI::NonNegativeNumber);
  estimate->add_option("--lambda", est.lambda, "Penalty for lasso/ridge")
      ->check(CLI::NonNegativeNumber);
  estimate->add_option("--max-terms", est.max_terms, "Term cap for fspda")
      ->check(CLI::PositiveNumber);
  estimate->add_flag("--cv", est.cv, "Select the tuning parameter by cross-validation (default)");
  estimate->add_flag("--levels", est.levels, "Report level counterfactuals (needs --yoy)");

  DataFlags cvf;
  CLI::App* cv = app.add_subcommand("cv", "Cross-validate the tuning parameter");
  add_data_flags(cv, cvf);

  SimFlags sim;
  CLI::App* simulate = app.add_subcommand("simulate", "Run the Monte Carlo comparison");
  simulate->add_option("--j", sim.j, "Number of controls");
  simulate->add_option("--t0", sim.t0, "Pre-treatment periods");
  simulate->add_option("--t1", sim.t1, "Post-treatment periods");
  simulate->add_option("--k-mode", sim.k_mode, "lt|eq|gt: K below, equal to or above r");
  simulate->add_option("--mode", sim.mode, "exact|approx group structure");
  simulate->add_option("--reps", sim.reps, "Replications");
  simulate->add_option("--seed", sim.seed, "Seed for loadings and replication streams");
  simulate->add_option("--methods", sim.methods, "Comma-separated method list");
  simulate->add_option("--out", sim.out, "Output directory");
  simulate->add_option("--workers", sim.workers, "Worker threads")->check(CLI::PositiveNumber);
  simulate->add_option("--grid-size", sim.grid_size, "Cross-validation grid size")
      ->check(CLI::PositiveNumber);
  simulate->add_flag("--full-sweep", sim.full_sweep, "Run all 27 J x T0 x K configurations");
  simulate->add_flag("--raw", sim.raw, "Include per-replication ratios in the JSON report");

  std::string oracle_input;
  std::string oracle_div = "l2";
  std::string oracle_out;
  CLI::App* oracle = app.add_subcommand("oracle", "Oracle weights from a known group structure");
  oracle->add_option("--input", oracle_input, "JSON with lambda_co, lambda0, omega_f, membership")
      ->required();
  oracle->add_option("--divergence", oracle_div, "l2|el|entropy|cr:<gamma>");
  oracle->add_option("--out", oracle_out, "Output JSON file (stdout always receives a copy)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << json{{"error", "InvalidArgument"}, {"message", e.what()}, {"context", json::object()}}.dump()
        << "\n";
    return kExitError;
  }

  try {
    if (*estimate) return cmd_estimate(est, out);
    if (*cv) return cmd_cv(cvf, out);
    if (*simulate) return cmd_simulate(sim, out);
    if (*oracle) return cmd_oracle(oracle_input, oracle_div, oracle_out, out);
  } catch (const Error& e) {
    err << e.to_json().dump() << "\n";
    const auto& ctx = e.context();
    if (ctx.contains("exit_code")) return ctx["exit_code"].get<int>();
    return kExitError;
  } catch (const std::exception& e) {
    err << json{{"error", "Internal"}, {"message", e.what()}, {"context", json::object()}}.dump()
        << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace scmr::cli
