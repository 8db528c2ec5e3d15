#include "scmrelax/oracle.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "scmrelax/error.hpp"

namespace scmr {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kColumnSpaceTol = 1e-8;
constexpr double kNegativeWeight = -1e-10;

MatrixXd pseudo_inverse(const MatrixXd& a) {
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  const double cutoff = 1e-12 * (sv.size() > 0 ? sv[0] : 0.0);
  VectorXd inv = VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > cutoff) inv[i] = 1.0 / sv[i];
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Solves a symmetric system that is expected to be positive definite.
VectorXd spd_solve(const MatrixXd& a, const VectorXd& b, ErrorCode code, const char* what) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(a, Eigen::EigenvaluesOnly);
  const VectorXd& ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 1e-12 * std::max(ev.maxCoeff(), 1e-300))) {
    throw Error(code, std::string(what) + " is singular",
                {{"min_eigenvalue", ev.minCoeff()}, {"max_eigenvalue", ev.maxCoeff()}});
  }
  return a.ldlt().solve(b);
}

VectorXd unit_weights(const GroupStructure& g, const VectorXd& w_g) {
  const VectorXd sizes = g.sizes();
  VectorXd w(g.j());
  for (int i = 0; i < g.j(); ++i) {
    const int k = g.membership[static_cast<std::size_t>(i)] - 1;
    w[i] = w_g[k] / sizes[k];
  }
  return w;
}

}  // namespace

void GroupStructure::validate() const {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "number of groups must be >= 1", {{"k", k}});
  std::vector<int> count(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < membership.size(); ++i) {
    const int g = membership[i];
    if (g < 1 || g > k) {
      throw Error(ErrorCode::kInvalidArgument, "group label out of range",
                  {{"unit", i + 1}, {"group", g}, {"k", k}});
    }
    ++count[static_cast<std::size_t>(g - 1)];
  }
  for (int g = 0; g < k; ++g) {
    if (count[static_cast<std::size_t>(g)] == 0) {
      throw Error(ErrorCode::kInvalidArgument, "empty group", {{"group", g + 1}});
    }
  }
}

VectorXd GroupStructure::sizes() const {
  VectorXd s = VectorXd::Zero(k);
  for (int g : membership) s[g - 1] += 1.0;
  return s;
}

MatrixXd GroupStructure::z_matrix() const {
  MatrixXd z = MatrixXd::Zero(j(), k);
  for (int i = 0; i < j(); ++i) z(i, membership[static_cast<std::size_t>(i)] - 1) = 1.0;
  return z;
}

GroupStructure GroupStructure::near_equal(int j, int k) {
  if (k < 1 || j < k) {
    throw Error(ErrorCode::kInvalidConfig, "need 1 <= k <= j for a group allocation",
                {{"j", j}, {"k", k}});
  }
  GroupStructure g;
  g.k = k;
  const int base = j / k;
  const int extra = j % k;
  for (int grp = 1; grp <= k; ++grp) {
    const int size = base + (grp <= extra ? 1 : 0);
    for (int i = 0; i < size; ++i) g.membership.push_back(grp);
  }
  return g;
}

void OracleInputs::validate() const {
  groups.validate();
  const auto kk = lambda_co.rows();
  const auto rr = lambda_co.cols();
  if (kk != groups.k || rr < 1 || lambda0.size() != rr || omega_f_hat.rows() != rr ||
      omega_f_hat.cols() != rr) {
    throw Error(ErrorCode::kDimensionMismatch, "oracle input dimensions are inconsistent",
                {{"k", kk}, {"r", rr}, {"groups", groups.k}, {"lambda0", lambda0.size()}});
  }
  if ((omega_f_hat - omega_f_hat.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, omega_f_hat.cwiseAbs().maxCoeff())) {
    throw Error(ErrorCode::kInvalidArgument, "omega_f_hat is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(omega_f_hat, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 1e-12)) {
    throw Error(ErrorCode::kInvalidArgument, "omega_f_hat is not positive definite",
                {{"min_eigenvalue", eig.eigenvalues().minCoeff()}});
  }
  Eigen::JacobiSVD<MatrixXd> svd(lambda_co);
  const VectorXd& sv = svd.singularValues();
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv[rank] > 1e-10 * sv[0]) ++rank;
  if (rank < std::min(kk, rr)) {
    throw Error(ErrorCode::kRankDeficient, "core loadings are rank deficient",
                {{"rank", rank}, {"expected", std::min(kk, rr)}});
  }
}

MomentPair oracle_moments(const OracleInputs& inp) {
  inp.validate();
  const MatrixXd z = inp.groups.z_matrix();
  const MatrixXd sig_co = inp.lambda_co * inp.omega_f_hat * inp.lambda_co.transpose();
  const VectorXd ups_co = inp.lambda_co * inp.omega_f_hat * inp.lambda0;
  MomentPair m;
  m.j = inp.groups.j();
  m.t0 = 0;
  const MatrixXd sig = z * sig_co * z.transpose();
  m.sigma_hat = 0.5 * (sig + sig.transpose());
  m.upsilon_hat = z * ups_co;
  return m;
}

OracleL2 oracle_weights_l2(const OracleInputs& inp) {
  inp.validate();
  const int k = inp.k();
  const int r = inp.r();
  const auto jj = static_cast<double>(inp.groups.j());
  const MatrixXd& lam = inp.lambda_co;
  const MatrixXd& omega = inp.omega_f_hat;
  const VectorXd sizes = inp.groups.sizes();
  const VectorXd ones = VectorXd::Ones(k);

  OracleL2 out;
  if (k <= r) {
    const MatrixXd sig_co = lam * omega * lam.transpose();
    const VectorXd ups_co = lam * omega * inp.lambda0;
    const VectorXd inv_one = spd_solve(sig_co, ones, ErrorCode::kSingularCore, "core moment matrix");
    const VectorXd inv_ups = sig_co.ldlt().solve(ups_co);
    out.gamma = (ones.dot(inv_ups) - 1.0) / ones.dot(inv_one);
    out.w_g = inv_ups - out.gamma * inv_one;
    out.case_tag = "k_le_r";
  } else {
    const MatrixXd lam_pinv = pseudo_inverse(lam);
    const VectorXd d = lam_pinv * ones;
    out.column_space_residual = (ones - lam * d).norm() / std::sqrt(static_cast<double>(k));
    const MatrixXd zz = sizes.asDiagonal();
    if (out.column_space_residual < kColumnSpaceTol) {
      const VectorXd omega_inv_d = spd_solve(omega, d, ErrorCode::kRankDeficient, "omega_f_hat");
      out.gamma = (d.dot(inp.lambda0) - 1.0) / d.dot(omega_inv_d);
      const VectorXd rhs = inp.lambda0 - out.gamma * omega_inv_d;
      const MatrixXd a = lam.transpose() * zz * lam;
      out.w_g = zz * lam * spd_solve(a, rhs, ErrorCode::kRankDeficient, "L' Z'Z L");
      out.case_tag = "k_gt_r_in_col";
    } else {
      // With 1_K outside col(L) the reduced balance condition
      // L Omega (L' w_G - lambda0) = -gamma 1_K can only hold with gamma = 0.
      out.gamma = 0.0;
      const MatrixXd zmz = zz - sizes * sizes.transpose() / jj;
      const MatrixXd b = lam.transpose() * zmz * lam;
      const VectorXd rhs = inp.lambda0 - lam.transpose() * sizes / jj;
      const VectorXd mu1 = spd_solve(b, rhs, ErrorCode::kRankDeficient, "L' Z'M_J Z L");
      const MatrixXd m_z = MatrixXd::Identity(k, k) - ones * sizes.transpose() / jj;
      out.w_g = zz * (m_z * lam * mu1 + ones / jj);
      out.case_tag = "k_gt_r_not_in_col";
    }
    if (out.column_space_residual >= kColumnSpaceTol * 1e-2 &&
        out.column_space_residual < kColumnSpaceTol * 1e2) {
      out.case_tag += "_near_boundary";
    }
  }
  out.w = unit_weights(inp.groups, out.w_g);

  if (out.w.minCoeff() < kNegativeWeight) {
    nlohmann::json negative = nlohmann::json::array();
    for (int g = 0; g < k; ++g) {
      if (out.w_g[g] < kNegativeWeight) negative.push_back(g + 1);
    }
    throw Error(ErrorCode::kBoundaryOracle, "closed-form oracle has negative group weights",
                {{"groups", negative}, {"case", out.case_tag}});
  }
  return out;
}

OracleG oracle_weights_g(const OracleInputs& inp, const Divergence& d, double tol) {
  const MomentPair m = oracle_moments(inp);
  RelaxationOptions opt;
  opt.tol = tol;
  RelaxationSolution sol = solve_relaxation(m, d, 0.0, opt);
  if (sol.status == SolveStatus::kInfeasible) {
    throw Error(ErrorCode::kInfeasibleOracle, "treated loadings are not representable",
                {{"eta_min", sol.certificate ? sol.certificate->eta_min : -1.0}});
  }
  if (sol.status != SolveStatus::kConverged) {
    throw Error(ErrorCode::kNumericalFailure, "oracle solve did not converge",
                {{"kkt_max_residual", sol.kkt.max_residual()}, {"iterations", sol.iterations}});
  }
  OracleG out;
  const MatrixXd z = inp.groups.z_matrix();
  out.w_g = z.transpose() * sol.w;
  out.w = unit_weights(inp.groups, out.w_g);
  out.gamma = sol.gamma;
  for (int g = 0; g < inp.k(); ++g) {
    if (out.w_g[g] <= 1e-8) out.zero_groups.push_back(g + 1);
  }
  out.solution = std::move(sol);
  return out;
}

double oracle_constraint_residual(const OracleInputs& inp, const VectorXd& w_g, double gamma) {
  const MatrixXd sig_co = inp.lambda_co * inp.omega_f_hat * inp.lambda_co.transpose();
  const VectorXd ups_co = inp.lambda_co * inp.omega_f_hat * inp.lambda0;
  const VectorXd r = (sig_co * w_g - ups_co).array() + gamma;
  return std::max(r.cwiseAbs().maxCoeff(), std::abs(w_g.sum() - 1.0));
}

VectorXd oracle_counterfactual(const VectorXd& w_star, const PanelData& panel) {
  if (w_star.size() != panel.num_controls()) {
    throw Error(ErrorCode::kDimensionMismatch, "weight length differs from the donor pool",
                {{"weights", w_star.size()}, {"controls", panel.num_controls()}});
  }
  return panel.post_controls() * w_star;
}

namespace {

std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

MatrixXd matrix_from_json(const nlohmann::json& rows, const char* name) {
  if (!rows.is_array() || rows.empty() || !rows[0].is_array()) {
    throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must be an array of arrays");
  }
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) {
      throw Error(ErrorCode::kDimensionMismatch, std::string(name) + " rows differ in length");
    }
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c].get<double>();
    }
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const OracleL2& o) {
  return {{"w", to_vec(o.w)},
          {"w_g", to_vec(o.w_g)},
          {"gamma", o.gamma},
          {"case_tag", o.case_tag},
          {"column_space_residual", o.column_space_residual}};
}

nlohmann::json to_json(const OracleG& o) {
  return {{"w", to_vec(o.w)},
          {"w_g", to_vec(o.w_g)},
          {"gamma", o.gamma},
          {"zero_groups", o.zero_groups},
          {"divergence", o.solution.divergence.name()},
          {"status", to_string(o.solution.status)},
          {"kkt_max_residual", o.solution.kkt.max_residual()}};
}

OracleInputs oracle_inputs_from_json(const nlohmann::json& doc) {
  try {
    OracleInputs inp;
    inp.lambda_co = matrix_from_json(doc.at("lambda_co"), "lambda_co");
    const auto l0 = doc.at("lambda0").get<std::vector<double>>();
    inp.lambda0 = Eigen::Map<const VectorXd>(l0.data(), static_cast<Eigen::Index>(l0.size()));
    if (doc.contains("omega_f")) {
      inp.omega_f_hat = matrix_from_json(doc.at("omega_f"), "omega_f");
    } else {
      inp.omega_f_hat = MatrixXd::Identity(inp.lambda_co.cols(), inp.lambda_co.cols());
    }
    inp.groups.membership = doc.at("membership").get<std::vector<int>>();
    inp.groups.k = static_cast<int>(inp.lambda_co.rows());
    inp.validate();
    return inp;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed oracle input: ") + e.what());
  }
}

}  // namespace scmr
