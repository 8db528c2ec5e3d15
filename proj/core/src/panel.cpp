#include "scmrelax/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "scmrelax/error.hpp"

namespace scmr {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Minimal RFC-4180 field splitter: handles quoted fields and doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(trim(current));
  return fields;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

PanelData::PanelData(Eigen::MatrixXd outcomes, int t0, std::vector<std::string> unit_labels,
                     std::vector<std::string> time_labels)
    : outcomes_(std::move(outcomes)),
      t0_(t0),
      unit_labels_(std::move(unit_labels)),
      time_labels_(std::move(time_labels)) {
  if (outcomes_.cols() < 2) {
    throw Error(ErrorCode::kDimensionMismatch, "panel needs a treated unit and at least one control",
                {{"columns", outcomes_.cols()}});
  }
  if (t0_ < 2) {
    throw Error(ErrorCode::kTooFewPeriods, "at least two pre-treatment periods are required",
                {{"t0", t0_}});
  }
  if (t0_ > outcomes_.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "t0 exceeds the number of periods",
                {{"t0", t0_}, {"periods", outcomes_.rows()}});
  }
  if (static_cast<Eigen::Index>(unit_labels_.size()) != outcomes_.cols() ||
      static_cast<Eigen::Index>(time_labels_.size()) != outcomes_.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "label counts do not match the outcome matrix");
  }
  if (!outcomes_.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "panel outcomes must be finite");
  }
}

PanelData PanelData::from_matrix(Eigen::MatrixXd outcomes, int t0) {
  std::vector<std::string> units{"treated"};
  for (Eigen::Index j = 1; j < outcomes.cols(); ++j) units.push_back("c" + std::to_string(j));
  std::vector<std::string> times;
  for (Eigen::Index t = 0; t < outcomes.rows(); ++t) times.push_back("t" + std::to_string(t + 1));
  return PanelData(std::move(outcomes), t0, std::move(units), std::move(times));
}

void ScaleVector::validate() const {
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) {
    throw Error(ErrorCode::kDegenerateSeries, "treated unit has zero pre-treatment variance",
                {{"unit", 0}});
  }
  for (Eigen::Index j = 0; j < sigma.size(); ++j) {
    if (!(sigma[j] > 0.0) || !std::isfinite(sigma[j])) {
      throw Error(ErrorCode::kDegenerateSeries, "control has zero pre-treatment variance",
                  {{"unit", j + 1}});
    }
  }
}

PanelData parse_panel_csv(const std::string& text, const std::string& treated_label,
                          const std::string& treatment_time_label) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw Error(ErrorCode::kIo, "CSV is empty");
  const auto& header = rows.front();
  if (header.size() < 3) {
    throw Error(ErrorCode::kDimensionMismatch,
                "CSV needs a time column, a treated unit and at least one control");
  }

  std::size_t treated_col = 0;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c] == treated_label) treated_col = c;
  }
  if (treated_col == 0) {
    throw Error(ErrorCode::kMissingUnit, "treated unit not found in CSV header",
                {{"unit", treated_label}});
  }

  const std::size_t n_periods = rows.size() - 1;
  const std::size_t n_units = header.size() - 1;
  Eigen::MatrixXd values(n_periods, n_units);
  std::vector<std::string> times;
  times.reserve(n_periods);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "ragged CSV row",
                  {{"row", r}, {"fields", row.size()}, {"expected", header.size()}});
    }
    times.push_back(row[0]);
    for (std::size_t c = 1; c < row.size(); ++c) {
      double v = 0.0;
      if (!parse_double(row[c], v)) {
        throw Error(ErrorCode::kNonNumericCell, "non-numeric cell '" + row[c] + "'",
                    {{"row", r}, {"col", c}});
      }
      values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) = v;
    }
  }

  const auto it = std::find(times.begin(), times.end(), treatment_time_label);
  if (it == times.end()) {
    throw Error(ErrorCode::kMissingTime, "treatment time not found in CSV",
                {{"time", treatment_time_label}});
  }
  const int t0 = static_cast<int>(it - times.begin());
  if (t0 < 2) {
    throw Error(ErrorCode::kTooFewPeriods, "at least two pre-treatment periods are required",
                {{"t0", t0}});
  }

  // Reorder so that the treated unit is column 0; controls keep file order.
  Eigen::MatrixXd outcomes(n_periods, n_units);
  std::vector<std::string> units{header[treated_col]};
  outcomes.col(0) = values.col(static_cast<Eigen::Index>(treated_col - 1));
  Eigen::Index next = 1;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (c == treated_col) continue;
    outcomes.col(next++) = values.col(static_cast<Eigen::Index>(c - 1));
    units.push_back(header[c]);
  }
  return PanelData(std::move(outcomes), t0, std::move(units), std::move(times));
}

PanelData load_panel_csv(const std::filesystem::path& path, const std::string& treated_label,
                         const std::string& treatment_time_label) {
  std::ifstream file(path);
  if (!file) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string(), {{"path", path.string()}});
  }
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_panel_csv(buffer.str(), treated_label, treatment_time_label);
}

std::string to_csv(const PanelData& panel) {
  std::ostringstream out;
  out.precision(15);
  out << "time";
  for (const auto& u : panel.unit_labels()) out << ',' << csv_escape(u);
  out << '\n';
  for (int t = 0; t < panel.num_periods(); ++t) {
    out << csv_escape(panel.time_labels()[static_cast<std::size_t>(t)]);
    for (Eigen::Index j = 0; j < panel.outcomes().cols(); ++j) out << ',' << panel.outcomes()(t, j);
    out << '\n';
  }
  return out.str();
}

nlohmann::json to_json(const PanelData& panel) {
  nlohmann::json rows = nlohmann::json::array();
  for (int t = 0; t < panel.num_periods(); ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < panel.outcomes().cols(); ++j) row.push_back(panel.outcomes()(t, j));
    rows.push_back(std::move(row));
  }
  return {{"t0", panel.t0()},
          {"t1", panel.t1()},
          {"units", panel.unit_labels()},
          {"times", panel.time_labels()},
          {"outcomes", std::move(rows)}};
}

Eigen::MatrixXd yoy_growth(const Eigen::MatrixXd& levels, int lag) {
  if (lag < 1) throw Error(ErrorCode::kInvalidArgument, "lag must be positive", {{"lag", lag}});
  if (levels.rows() < lag + 1) {
    throw Error(ErrorCode::kTooFewPeriods, "need at least lag + 1 periods for growth rates",
                {{"periods", levels.rows()}, {"lag", lag}});
  }
  const Eigen::Index n = levels.rows() - lag;
  Eigen::MatrixXd growth(n, levels.cols());
  for (Eigen::Index t = 0; t < n; ++t) {
    for (Eigen::Index j = 0; j < levels.cols(); ++j) {
      const double base = levels(t, j);
      if (base == 0.0) {
        throw Error(ErrorCode::kZeroBase, "zero level used as growth base", {{"row", t}, {"col", j}});
      }
      growth(t, j) = levels(t + lag, j) / base - 1.0;
    }
  }
  return growth;
}

PanelData yoy_growth(const PanelData& panel, int lag) {
  Eigen::MatrixXd growth = yoy_growth(panel.outcomes(), lag);
  const int t0 = panel.t0() - lag;
  if (t0 < 2) {
    throw Error(ErrorCode::kTooFewPeriods, "growth panel would have fewer than two pre-treatment periods",
                {{"t0", t0}, {"lag", lag}});
  }
  std::vector<std::string> times(panel.time_labels().begin() + lag, panel.time_labels().end());
  return PanelData(std::move(growth), t0, panel.unit_labels(), std::move(times));
}

std::pair<PanelData, ScaleVector> standardize(const PanelData& panel) {
  const int t0 = panel.t0();
  const Eigen::MatrixXd pre = panel.outcomes().topRows(t0);
  const Eigen::RowVectorXd mean = pre.colwise().mean();
  const Eigen::RowVectorXd sd =
      ((pre.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(t0 - 1)).cwiseSqrt();

  ScaleVector scales;
  scales.sigma0 = sd[0];
  scales.sigma = sd.tail(sd.size() - 1).transpose();
  scales.validate();

  Eigen::MatrixXd scaled = panel.outcomes().array().rowwise() / sd.array();
  return {PanelData(std::move(scaled), t0, panel.unit_labels(), panel.time_labels()), scales};
}

Eigen::VectorXd destandardize_weights(const Eigen::VectorXd& w_standardized,
                                      const ScaleVector& scales) {
  if (w_standardized.size() != scales.sigma.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "weight and scale lengths differ",
                {{"weights", w_standardized.size()}, {"scales", scales.sigma.size()}});
  }
  return scales.sigma0 * w_standardized.cwiseQuotient(scales.sigma);
}

Eigen::VectorXd reconstruct_levels(const Eigen::VectorXd& growth_predictions,
                                   const Eigen::VectorXd& observed_levels, int t0, int lag) {
  if (lag < 1) throw Error(ErrorCode::kInvalidArgument, "lag must be positive", {{"lag", lag}});
  if (t0 < lag) {
    throw Error(ErrorCode::kInsufficientHistory, "need at least lag pre-treatment levels",
                {{"t0", t0}, {"lag", lag}});
  }
  if (observed_levels.size() < t0) {
    throw Error(ErrorCode::kDimensionMismatch, "observed levels shorter than the pre-treatment window",
                {{"levels", observed_levels.size()}, {"t0", t0}});
  }
  const Eigen::Index t1 = growth_predictions.size();
  Eigen::VectorXd levels(t1);
  for (Eigen::Index i = 0; i < t1; ++i) {
    const Eigen::Index t = t0 + i;
    const Eigen::Index base_t = t - lag;
    const double base = base_t < t0 ? observed_levels[base_t] : levels[base_t - t0];
    levels[i] = (1.0 + growth_predictions[i]) * base;
  }
  return levels;
}

}  // namespace scmr
