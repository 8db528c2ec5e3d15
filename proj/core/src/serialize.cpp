#include "scmrelax/serialize.hpp"

namespace scmr {

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

nlohmann::json to_json(const MomentPair& m) {
  return {{"sigma_hat", matrix_json(m.sigma_hat)},
          {"upsilon_hat", vector_json(m.upsilon_hat)},
          {"j", m.j},
          {"t0", m.t0},
          {"standardized", m.standardized}};
}

nlohmann::json to_json(const KktReport& k) {
  return {{"stationarity", k.stationarity},       {"primal_feasibility", k.primal_feasibility},
          {"dual_feasibility", k.dual_feasibility}, {"complementarity", k.complementarity},
          {"duality_gap", k.duality_gap},         {"passed", k.passed}};
}

nlohmann::json to_json(const FeasibilityCertificate& c) {
  return {{"feasible", c.feasible},
          {"eta", c.eta},
          {"eta_min", c.eta_min},
          {"w", vector_json(c.w)},
          {"gamma", c.gamma}};
}

nlohmann::json to_json(const RelaxationSolution& s) {
  nlohmann::json out = {{"w", vector_json(s.w)},
                        {"gamma", s.gamma},
                        {"eta", s.eta},
                        {"objective", s.objective},
                        {"status", to_string(s.status)},
                        {"kkt_max_residual", s.kkt.max_residual()},
                        {"kkt", to_json(s.kkt)},
                        {"divergence", s.divergence.name()},
                        {"iterations", s.iterations}};
  if (s.certificate) out["certificate"] = to_json(*s.certificate);
  return out;
}

nlohmann::json to_json(const WeightSolution& s) {
  return {{"w", vector_json(s.w)},
          {"objective", s.objective},
          {"status", to_string(s.status)},
          {"kkt_max_residual", s.kkt_max_residual},
          {"iterations", s.iterations},
          {"non_unique", s.non_unique}};
}

nlohmann::json to_json(const FsPdaFit& f) {
  return {{"selected", f.selected},
          {"coefficients", vector_json(f.coefficients)},
          {"intercept", f.intercept},
          {"rss", f.rss},
          {"bic_path", f.bic_path}};
}

nlohmann::json to_json(const ScaleVector& s) {
  return {{"sigma0", s.sigma0}, {"sigma", vector_json(s.sigma)}};
}

}  // namespace scmr
