#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "scmrelax/baselines.hpp"
#include "scmrelax/moments.hpp"
#include "scmrelax/panel.hpp"
#include "scmrelax/solver.hpp"

namespace scmr {

nlohmann::json vector_json(const Eigen::VectorXd& v);
nlohmann::json matrix_json(const Eigen::MatrixXd& m);  // row-major array of arrays

nlohmann::json to_json(const MomentPair& m);
nlohmann::json to_json(const KktReport& k);
nlohmann::json to_json(const FeasibilityCertificate& c);

/// {"w", "gamma", "eta", "objective", "status", "kkt_max_residual", ...}
nlohmann::json to_json(const RelaxationSolution& s);

/// Same keys as a relaxation solution where they apply (gamma and eta omitted).
nlohmann::json to_json(const WeightSolution& s);

/// {"selected", "coefficients", "intercept", "rss", "bic_path"}
nlohmann::json to_json(const FsPdaFit& f);

nlohmann::json to_json(const ScaleVector& s);

}  // namespace scmr
