#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "scmrelax/oracle.hpp"
#include "scmrelax/panel.hpp"

namespace scmr {

enum class GroupMode { kExact, kApproximate };

/// K relative to r: floor(0.8 r), r, or floor(1.2 r) + 1.
enum class KMode { kLess, kEqual, kGreater };

int k_for_mode(KMode mode, int r);

struct DgpConfig {
  int j = 50;
  int t0 = 50;
  int t1 = 50;
  std::optional<int> r;              // default floor(log t0)
  int k = 2;
  double ar_coef = 0.5;
  std::optional<double> loading_var;     // default 3 / r
  std::optional<double> lambda0_noise;   // half-width, default 0.1 / sqrt(r)
  std::optional<double> group_noise;     // half-width, default 0.2 / sqrt(r)
  GroupMode mode = GroupMode::kExact;
  std::uint64_t seed = 20240601;

  int resolved_r() const;
  double resolved_loading_var() const;
  double resolved_lambda0_noise() const;
  double resolved_group_noise() const;

  /// Throws InvalidConfig naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const DgpConfig& cfg);

struct SimulatedInstance {
  PanelData panel;               // untreated outcomes, treated unit in column 0
  OracleInputs oracle;           // omega_f_hat from the pre-treatment factors
  Eigen::VectorXd w_star_g;      // drawn group weights, first entry 0
  Eigen::MatrixXd factors;       // T x r
  Eigen::MatrixXd errors;        // T x (J + 1)
  Eigen::MatrixXd loadings;      // (J + 1) x r, treated unit first
};

/// Loadings, groups, w*_G and the lambda0 perturbation depend only on
/// cfg.seed; factors and errors are redrawn per replication from a stream
/// seeded with seed xor splitmix64(rep).
SimulatedInstance generate_instance(const DgpConfig& cfg, int rep);

enum class Method { kScm, kLasso, kRidge, kFsPda, kL2Relax, kElRelax, kEntropyRelax };

std::string to_string(Method method);

/// Accepts the canonical names and the short CLI aliases (scm, lasso, ridge,
/// fspda, l2, el, entropy), case-insensitively.
Method parse_method(const std::string& name);

const std::vector<Method>& all_methods();

/// Oracle weights a method is scored against: the L2 oracle for every method
/// except EL and Entropy relaxations, which use the oracle of their own
/// divergence when it is attainable with positive weights.
struct OracleTarget {
  Eigen::VectorXd w;
  /// "closed_form", "numeric_exact", "numeric_band" or "l2_fallback".
  std::string source;
};

OracleTarget oracle_target(const OracleInputs& inp, const Divergence& d, double tol = 1e-8);

struct MethodRep {
  double prediction_ratio = 0.0;
  double l1_ratio = 0.0;
  double l2_ratio = 0.0;
  double tuning = 0.0;  // chosen eta / lambda / term cap (0 for SCM)
  bool converged = true;
};

struct MethodSummary {
  double prediction_ratio = 0.0;
  double l1_ratio = 0.0;
  double l2_ratio = 0.0;
  int nonconverged = 0;
  std::vector<MethodRep> reps;
};

struct ExperimentReport {
  DgpConfig config;
  int n_reps = 0;
  std::vector<Method> methods;
  std::map<Method, MethodSummary> per_method;

  /// One row per method: method,prediction_ratio,l1_ratio,l2_ratio,nonconverged.
  std::string to_csv() const;
  nlohmann::json to_json(bool include_reps = false) const;
};

struct ExperimentOptions {
  int workers = 1;
  double tol = 1e-8;
  int grid_size = 20;
};

/// Runs the Monte Carlo comparison. Any failing replication aborts the run
/// with an Error whose context carries the replication index.
ExperimentReport run_experiment(const DgpConfig& cfg, int n_reps, const std::vector<Method>& methods,
                                const ExperimentOptions& options = {});

enum class RiskWindow { kPre, kPost };

/// Mean of (Y w - y0)^2 over the chosen window.
double empirical_risk(const Eigen::VectorXd& w, const PanelData& panel, RiskWindow window);

}  // namespace scmr
