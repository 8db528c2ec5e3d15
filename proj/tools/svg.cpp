#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace scmr::cli {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string gap_chart_svg(const std::vector<std::string>& times, const std::vector<double>& observed,
                          const std::vector<double>& predicted, int first_treated,
                          const std::string& title) {
  const std::size_t n = observed.size();
  double lo = 0.0;
  double hi = 1.0;
  if (n > 0) {
    lo = std::min(*std::min_element(observed.begin(), observed.end()),
                  *std::min_element(predicted.begin(), predicted.end()));
    hi = std::max(*std::max_element(observed.begin(), observed.end()),
                  *std::max_element(predicted.begin(), predicted.end()));
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto x_of = [&](std::size_t i) {
    return kLeft + (n > 1 ? plot_w * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0);
  };
  auto y_of = [&](double v) { return kTop + plot_h * (hi - v) / (hi - lo); };
  auto polyline = [&](const std::vector<double>& ys) {
    std::string pts;
    for (std::size_t i = 0; i < ys.size(); ++i) {
      if (i) pts += ' ';
      pts += num(x_of(i)) + ',' + num(y_of(ys[i]));
    }
    return pts;
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(kLeft) << "\" y=\"24\" font-size=\"15\">" << escape(title) << "</text>\n";
  // Axes and horizontal ticks.
  os << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop + plot_h) << "\" x2=\""
     << num(kLeft + plot_w) << "\" y2=\"" << num(kTop + plot_h) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(kLeft)
     << "\" y2=\"" << num(kTop + plot_h) << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const double y = y_of(v);
    os << "<line x1=\"" << num(kLeft - 4) << "\" y1=\"" << num(y) << "\" x2=\""
       << num(kLeft + plot_w) << "\" y2=\"" << num(y) << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(y + 4)
       << "\" text-anchor=\"end\">" << label(v) << "</text>\n";
  }
  const std::size_t step = std::max<std::size_t>(1, n / 8);
  for (std::size_t i = 0; i < n && i < times.size(); i += step) {
    os << "<text x=\"" << num(x_of(i)) << "\" y=\"" << num(kTop + plot_h + 18)
       << "\" text-anchor=\"middle\">" << escape(times[i]) << "</text>\n";
  }
  if (first_treated >= 0 && static_cast<std::size_t>(first_treated) < n) {
    const double x = x_of(static_cast<std::size_t>(first_treated));
    os << "<line x1=\"" << num(x) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(x) << "\" y2=\""
       << num(kTop + plot_h) << "\" stroke=\"gray\" stroke-dasharray=\"4,4\"/>\n";
  }
  os << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"" << polyline(observed)
     << "\"/>\n";
  os << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\" stroke-dasharray=\"6,3\" "
        "points=\""
     << polyline(predicted) << "\"/>\n";
  // Legend.
  const double lx = kLeft + plot_w + 15;
  os << "<line x1=\"" << num(lx) << "\" y1=\"" << num(kTop + 10) << "\" x2=\"" << num(lx + 25)
     << "\" y2=\"" << num(kTop + 10) << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
  os << "<text x=\"" << num(lx + 30) << "\" y=\"" << num(kTop + 14) << "\">observed</text>\n";
  os << "<line x1=\"" << num(lx) << "\" y1=\"" << num(kTop + 30) << "\" x2=\"" << num(lx + 25)
     << "\" y2=\"" << num(kTop + 30)
     << "\" stroke=\"#c0392b\" stroke-width=\"1.5\" stroke-dasharray=\"6,3\"/>\n";
  os << "<text x=\"" << num(lx + 30) << "\" y=\"" << num(kTop + 34) << "\">counterfactual</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace scmr::cli
