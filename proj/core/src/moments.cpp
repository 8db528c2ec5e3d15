#include "scmrelax/moments.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "scmrelax/error.hpp"

namespace scmr {

void MomentPair::validate() const {
  if (sigma_hat.rows() != j || sigma_hat.cols() != j || upsilon_hat.size() != j || j < 1) {
    throw Error(ErrorCode::kDimensionMismatch, "moment dimensions are inconsistent",
                {{"j", j}, {"sigma_rows", sigma_hat.rows()}, {"upsilon", upsilon_hat.size()}});
  }
  if (!sigma_hat.allFinite() || !upsilon_hat.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "moments must be finite");
  }
  const double scale = std::max(1.0, sigma_hat.cwiseAbs().maxCoeff());
  if ((sigma_hat - sigma_hat.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(ErrorCode::kInvalidArgument, "sigma_hat is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_hat, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw Error(ErrorCode::kInvalidArgument, "sigma_hat is not positive semi-definite",
                {{"min_eigenvalue", eig.eigenvalues().minCoeff()}});
  }
}

MomentPair compute_moments(const Eigen::MatrixXd& controls, const Eigen::VectorXd& treated) {
  const auto t0 = controls.rows();
  if (t0 < 2) {
    throw Error(ErrorCode::kTooFewPeriods, "moments need at least two periods", {{"t0", t0}});
  }
  if (treated.size() != t0) {
    throw Error(ErrorCode::kDimensionMismatch, "treated series length differs from controls");
  }
  MomentPair m;
  m.j = static_cast<int>(controls.cols());
  m.t0 = static_cast<int>(t0);
  const double inv_t0 = 1.0 / static_cast<double>(t0);
  Eigen::MatrixXd gram = controls.transpose() * controls * inv_t0;
  m.sigma_hat = 0.5 * (gram + gram.transpose());
  m.upsilon_hat = controls.transpose() * treated * inv_t0;
  return m;
}

MomentPair compute_moments(const PanelData& panel) {
  return compute_moments(panel.pre_controls(), panel.pre_treated());
}

EtaBar eta_bar(const MomentPair& m) {
  const Eigen::VectorXd v =
      m.sigma_hat.rowwise().sum() / static_cast<double>(m.j) - m.upsilon_hat;
  const double hi = v.maxCoeff();
  const double lo = v.minCoeff();
  return {0.5 * (hi - lo), -0.5 * (hi + lo)};
}

double moment_scale(const MomentPair& m) {
  double s = 0.0;
  if (m.sigma_hat.size() > 0) s = m.sigma_hat.cwiseAbs().maxCoeff();
  if (m.upsilon_hat.size() > 0) s = std::max(s, m.upsilon_hat.cwiseAbs().maxCoeff());
  return s > 0.0 ? s : 1.0;
}

}  // namespace scmr
