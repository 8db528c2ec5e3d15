#pragma once

#include <string>

#include <Eigen/Core>

namespace scmr {

enum class DivergenceKind { kL2, kEL, kEntropy, kCressieRead };

/// Per-coordinate strictly convex penalty g whose sum is minimized over the
/// relaxation's feasible set.
///
///   L2           g(x) = x^2
///   EL           g(x) = -log x
///   Entropy      g(x) = x log x          (0 log 0 := 0 for the value)
///   CressieRead  g(x) = (x^{a+1} - 1) / (a (a + 1)),  a in (-1, 1] \ {0}
///
/// CressieRead(0) and CressieRead(-1) are returned as Entropy and EL.
class Divergence {
 public:
  static Divergence l2() { return Divergence(DivergenceKind::kL2, 0.0); }
  static Divergence el() { return Divergence(DivergenceKind::kEL, 0.0); }
  static Divergence entropy() { return Divergence(DivergenceKind::kEntropy, 0.0); }
  static Divergence cressie_read(double gamma);

  /// Accepts "l2", "el", "entropy" and "cr:<gamma>".
  static Divergence parse(const std::string& text);

  DivergenceKind kind() const { return kind_; }
  double cr_gamma() const { return cr_gamma_; }
  std::string name() const;

  /// True when g is only defined (or only differentiable) for x > 0, so the
  /// minimizer stays strictly inside the simplex.
  bool requires_positive() const;

  double value(double x) const;
  double derivative(double x) const;
  double second_derivative(double x) const;

  bool operator==(const Divergence&) const = default;

 private:
  Divergence(DivergenceKind kind, double gamma) : kind_(kind), cr_gamma_(gamma) {}

  DivergenceKind kind_;
  double cr_gamma_;
};

/// Sum_j g(w_j). Throws DomainViolation(j) outside the domain of g.
double divergence_value(const Divergence& d, const Eigen::VectorXd& w);

/// Componentwise g'(w_j). Throws DomainViolation(j) where g' is undefined.
Eigen::VectorXd divergence_gradient(const Divergence& d, const Eigen::VectorXd& w);

Eigen::VectorXd divergence_hessian_diagonal(const Divergence& d, const Eigen::VectorXd& w);

}  // namespace scmr
