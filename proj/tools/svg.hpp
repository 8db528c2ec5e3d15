#pragma once

#include <string>
#include <vector>

namespace scmr::cli {

/// Static line chart of an observed and a counterfactual series with a
/// dashed marker at the first treated period.
std::string gap_chart_svg(const std::vector<std::string>& times, const std::vector<double>& observed,
                          const std::vector<double>& predicted, int first_treated,
                          const std::string& title);

}  // namespace scmr::cli
