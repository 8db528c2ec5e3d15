#include "scmrelax/divergence.hpp"

#include <cmath>
#include <sstream>

#include "scmrelax/error.hpp"

namespace scmr {

namespace {

[[noreturn]] void domain_violation(const Divergence& d, double x, Eigen::Index j = -1) {
  throw Error(ErrorCode::kDomainViolation, d.name() + " is undefined at this weight",
              {{"index", j}, {"value", x}});
}

}  // namespace

Divergence Divergence::cressie_read(double gamma) {
  if (!(gamma >= -1.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "Cressie-Read gamma must lie in [-1, 1]",
                {{"gamma", gamma}});
  }
  if (gamma == 0.0) return entropy();
  if (gamma == -1.0) return el();
  return Divergence(DivergenceKind::kCressieRead, gamma);
}

Divergence Divergence::parse(const std::string& text) {
  if (text == "l2" || text == "L2") return l2();
  if (text == "el" || text == "EL") return el();
  if (text == "entropy") return entropy();
  if (text.rfind("cr:", 0) == 0) {
    std::istringstream in(text.substr(3));
    double g = 0.0;
    if (in >> g && in.eof()) return cressie_read(g);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown divergence '" + text + "'");
}

std::string Divergence::name() const {
  switch (kind_) {
    case DivergenceKind::kL2: return "l2";
    case DivergenceKind::kEL: return "el";
    case DivergenceKind::kEntropy: return "entropy";
    case DivergenceKind::kCressieRead: {
      std::ostringstream out;
      out << "cr:" << cr_gamma_;
      return out.str();
    }
  }
  return "unknown";
}

bool Divergence::requires_positive() const {
  switch (kind_) {
    case DivergenceKind::kL2: return false;
    case DivergenceKind::kEL:
    case DivergenceKind::kEntropy: return true;
    case DivergenceKind::kCressieRead: return cr_gamma_ < 0.0;
  }
  return true;
}

double Divergence::value(double x) const {
  switch (kind_) {
    case DivergenceKind::kL2: return x * x;
    case DivergenceKind::kEL:
      if (!(x > 0.0)) domain_violation(*this, x);
      return -std::log(x);
    case DivergenceKind::kEntropy:
      if (x == 0.0) return 0.0;
      if (!(x > 0.0)) domain_violation(*this, x);
      return x * std::log(x);
    case DivergenceKind::kCressieRead:
      if (x < 0.0 || (x == 0.0 && cr_gamma_ < 0.0)) domain_violation(*this, x);
      return (std::pow(x, cr_gamma_ + 1.0) - 1.0) / (cr_gamma_ * (cr_gamma_ + 1.0));
  }
  return 0.0;
}

double Divergence::derivative(double x) const {
  switch (kind_) {
    case DivergenceKind::kL2: return 2.0 * x;
    case DivergenceKind::kEL:
      if (!(x > 0.0)) domain_violation(*this, x);
      return -1.0 / x;
    case DivergenceKind::kEntropy:
      if (!(x > 0.0)) domain_violation(*this, x);
      return std::log(x) + 1.0;
    case DivergenceKind::kCressieRead:
      if (x < 0.0 || (x == 0.0 && cr_gamma_ < 0.0)) domain_violation(*this, x);
      return std::pow(x, cr_gamma_) / cr_gamma_;
  }
  return 0.0;
}

double Divergence::second_derivative(double x) const {
  switch (kind_) {
    case DivergenceKind::kL2: return 2.0;
    case DivergenceKind::kEL:
      if (!(x > 0.0)) domain_violation(*this, x);
      return 1.0 / (x * x);
    case DivergenceKind::kEntropy:
      if (!(x > 0.0)) domain_violation(*this, x);
      return 1.0 / x;
    case DivergenceKind::kCressieRead:
      if (!(x > 0.0)) domain_violation(*this, x);
      return std::pow(x, cr_gamma_ - 1.0);
  }
  return 0.0;
}

double divergence_value(const Divergence& d, const Eigen::VectorXd& w) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    try {
      total += d.value(w[j]);
    } catch (const Error&) {
      domain_violation(d, w[j], j);
    }
  }
  return total;
}

Eigen::VectorXd divergence_gradient(const Divergence& d, const Eigen::VectorXd& w) {
  Eigen::VectorXd g(w.size());
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    try {
      g[j] = d.derivative(w[j]);
    } catch (const Error&) {
      domain_violation(d, w[j], j);
    }
  }
  return g;
}

Eigen::VectorXd divergence_hessian_diagonal(const Divergence& d, const Eigen::VectorXd& w) {
  Eigen::VectorXd h(w.size());
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    try {
      h[j] = d.second_derivative(w[j]);
    } catch (const Error&) {
      domain_violation(d, w[j], j);
    }
  }
  return h;
}

}  // namespace scmr
