#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace scmr {

/// Outcome panel for one treated unit and a donor pool of J controls.
///
/// Rows are time periods (pre-treatment first), column 0 is the treated unit
/// and columns 1..J are the controls. Instances are immutable and validated on
/// construction: t0 >= 2, J >= 1, all entries finite, label counts match.
class PanelData {
 public:
  PanelData(Eigen::MatrixXd outcomes, int t0, std::vector<std::string> unit_labels,
            std::vector<std::string> time_labels);

  /// Builds a panel with generated labels ("treated", "c1", ..., "t1", ...).
  static PanelData from_matrix(Eigen::MatrixXd outcomes, int t0);

  const Eigen::MatrixXd& outcomes() const { return outcomes_; }
  int t0() const { return t0_; }
  int t1() const { return static_cast<int>(outcomes_.rows()) - t0_; }
  int num_periods() const { return static_cast<int>(outcomes_.rows()); }
  int num_controls() const { return static_cast<int>(outcomes_.cols()) - 1; }
  const std::vector<std::string>& unit_labels() const { return unit_labels_; }
  const std::vector<std::string>& time_labels() const { return time_labels_; }

  Eigen::VectorXd treated() const { return outcomes_.col(0); }
  Eigen::MatrixXd controls() const { return outcomes_.rightCols(num_controls()); }
  Eigen::VectorXd pre_treated() const { return outcomes_.col(0).head(t0_); }
  Eigen::MatrixXd pre_controls() const { return outcomes_.topRightCorner(t0_, num_controls()); }
  Eigen::VectorXd post_treated() const { return outcomes_.col(0).tail(t1()); }
  Eigen::MatrixXd post_controls() const {
    return outcomes_.bottomRightCorner(t1(), num_controls());
  }

 private:
  Eigen::MatrixXd outcomes_;
  int t0_;
  std::vector<std::string> unit_labels_;
  std::vector<std::string> time_labels_;
};

/// Per-unit pre-treatment standard deviations used for scale-only standardization.
struct ScaleVector {
  double sigma0 = 1.0;
  Eigen::VectorXd sigma;

  /// Throws DegenerateSeries if any entry is not strictly positive.
  void validate() const;
};

/// Reads a wide-format CSV (`time,<unit1>,<unit2>,...`). The treated column is
/// moved to index 0; `treatment_time_label` names the first treated period.
PanelData load_panel_csv(const std::filesystem::path& path, const std::string& treated_label,
                         const std::string& treatment_time_label);

/// Same as load_panel_csv but parses CSV text held in memory.
PanelData parse_panel_csv(const std::string& text, const std::string& treated_label,
                          const std::string& treatment_time_label);

/// Writes the panel back out in wide format with 15 significant digits.
std::string to_csv(const PanelData& panel);

nlohmann::json to_json(const PanelData& panel);

/// Year-over-year growth y[t] / y[t - lag] - 1 on a raw period-by-unit matrix.
Eigen::MatrixXd yoy_growth(const Eigen::MatrixXd& levels, int lag);

/// Growth panel with t0 reduced by `lag` and the first `lag` time labels dropped.
PanelData yoy_growth(const PanelData& panel, int lag = 4);

/// Divides every column by its pre-treatment standard deviation ((T0-1)
/// divisor). Means are not removed.
std::pair<PanelData, ScaleVector> standardize(const PanelData& panel);

/// Maps weights estimated on standardized data to weights on raw outcomes:
/// sigma0 * w_j / sigma_j.
Eigen::VectorXd destandardize_weights(const Eigen::VectorXd& w_standardized,
                                      const ScaleVector& scales);

/// Rebuilds level counterfactuals from predicted growth rates.
///
/// `observed_levels` is indexed on the level panel's clock and must cover at
/// least the `t0` pre-treatment periods; `growth_predictions[i]` is the
/// predicted growth for period t0 + i. The base for period t is the observed
/// level at t - lag while that is pre-treatment, otherwise the reconstructed
/// value.
Eigen::VectorXd reconstruct_levels(const Eigen::VectorXd& growth_predictions,
                                   const Eigen::VectorXd& observed_levels, int t0, int lag);

}  // namespace scmr
