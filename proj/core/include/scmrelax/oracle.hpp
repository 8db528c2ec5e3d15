#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "scmrelax/divergence.hpp"
#include "scmrelax/moments.hpp"
#include "scmrelax/panel.hpp"
#include "scmrelax/solver.hpp"

namespace scmr {

/// Latent group membership of the J controls: membership[j] in 1..k.
struct GroupStructure {
  std::vector<int> membership;
  int k = 0;

  /// Throws InvalidArgument on out-of-range labels or an empty group.
  void validate() const;
  int j() const { return static_cast<int>(membership.size()); }
  /// Group sizes J_1..J_K.
  Eigen::VectorXd sizes() const;
  /// J x K indicator matrix Z.
  Eigen::MatrixXd z_matrix() const;

  /// Contiguous near-equal groups; the remainder goes to the first groups.
  static GroupStructure near_equal(int j, int k);
};

struct OracleInputs {
  Eigen::MatrixXd lambda_co;    // K x r core loadings
  Eigen::VectorXd lambda0;      // r, treated unit
  Eigen::MatrixXd omega_f_hat;  // r x r
  GroupStructure groups;

  /// Throws DimensionMismatch, InvalidArgument (omega not positive definite)
  /// or RankDeficient (rank of lambda_co below min(K, r)).
  void validate() const;
  int k() const { return static_cast<int>(lambda_co.rows()); }
  int r() const { return static_cast<int>(lambda_co.cols()); }
};

/// Noiseless moments Sigma* = Z Sigma^co Z', Upsilon* = Z Upsilon^co with
/// Sigma^co = L Omega L' and Upsilon^co = L Omega lambda0.
MomentPair oracle_moments(const OracleInputs& inp);

struct OracleL2 {
  Eigen::VectorXd w;    // per unit
  Eigen::VectorXd w_g;  // per group
  double gamma = 0.0;
  /// "k_le_r", "k_gt_r_in_col" or "k_gt_r_not_in_col"; a "_near_boundary"
  /// suffix marks column-space residuals within two decades of the cutoff.
  std::string case_tag;
  double column_space_residual = 0.0;  // only meaningful when K > r
};

/// Closed-form oracle for the L2 objective, valid when the solution is
/// interior. Throws SingularCore, RankDeficient or BoundaryOracle.
OracleL2 oracle_weights_l2(const OracleInputs& inp);

struct OracleG {
  Eigen::VectorXd w;
  Eigen::VectorXd w_g;
  double gamma = 0.0;
  std::vector<int> zero_groups;  // 1-based groups with (numerically) zero weight
  RelaxationSolution solution;
};

/// Numeric oracle: the relaxation program at eta = 0 on the noiseless
/// moments, projected onto within-group equal weights. Throws InfeasibleOracle
/// when the constraint set is empty and NumericalFailure if the solve fails.
OracleG oracle_weights_g(const OracleInputs& inp, const Divergence& d, double tol = 1e-8);

/// max(|Sigma^co w_G - Upsilon^co + gamma 1|_inf, |1'w_G - 1|).
double oracle_constraint_residual(const OracleInputs& inp, const Eigen::VectorXd& w_g,
                                  double gamma);

/// Post-treatment rows of the controls combined with w_star.
Eigen::VectorXd oracle_counterfactual(const Eigen::VectorXd& w_star, const PanelData& panel);

nlohmann::json to_json(const OracleL2& o);
nlohmann::json to_json(const OracleG& o);

/// Reads {"lambda_co": [[...]], "lambda0": [...], "omega_f": [[...]],
/// "membership": [...]} ("omega_f" defaults to the identity).
OracleInputs oracle_inputs_from_json(const nlohmann::json& doc);

}  // namespace scmr
