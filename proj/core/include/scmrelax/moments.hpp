#pragma once

#include <Eigen/Core>

#include "scmrelax/panel.hpp"

namespace scmr {

/// Uncentered cross moments of the pre-treatment window:
/// sigma_hat = Y'Y / T0 and upsilon_hat = Y'y0 / T0.
struct MomentPair {
  Eigen::MatrixXd sigma_hat;
  Eigen::VectorXd upsilon_hat;
  int j = 0;
  int t0 = 0;
  bool standardized = false;

  /// Throws DimensionMismatch / InvalidArgument when the invariants are broken
  /// (shape, symmetry to 1e-12, eigenvalues >= -1e-10 relative).
  void validate() const;
};

MomentPair compute_moments(const PanelData& panel);

/// Moments from explicit pre-treatment blocks (rows = periods).
MomentPair compute_moments(const Eigen::MatrixXd& controls, const Eigen::VectorXd& treated);

/// Smallest band radius at which equal weights are feasible, and the shift
/// gamma that attains it.
struct EtaBar {
  double eta_bar = 0.0;
  double gamma = 0.0;
};

EtaBar eta_bar(const MomentPair& m);

/// Largest absolute entry of (sigma_hat, upsilon_hat); used to normalize solver inputs.
double moment_scale(const MomentPair& m);

}  // namespace scmr
