#pragma once

#include <utility>
#include <vector>

namespace biocon {

/// Nodes and positive weights of a quadrature rule on the interval [a, b].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::pair<double, double> interval{0.0, 0.0};

  std::size_t size() const { return nodes.size(); }

  /// Apply the rule to a callable f(x).
  template <class F>
  auto integrate(F&& f) const -> decltype(f(0.0)) {
    using R = decltype(f(0.0));
    R acc{};
    for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(nodes[i]);
    return acc;
  }
};

/// Exponential integral E_n(x) = int_1^inf exp(-x t) / t^n dt.
///
/// E_1 uses the classical series for x <= 1 and a continued fraction for
/// x > 1; higher orders follow from n E_{n+1}(x) = exp(-x) - x E_n(x).
/// Returns 0 for x > 700 (the integral underflows far below double range).
/// Throws std::domain_error for x < 0, n < 1, or (n == 1, x == 0).
double exp_integral(int n, double x);

/// Gauss-Legendre rule with n nodes on [a, b]; exact for degree <= 2n-1.
QuadratureRule gauss_legendre(int n, double a, double b);

/// Equal-weight rule on [0, 2pi) for smooth periodic integrands (n >= 4).
/// Nodes are 2pi j/n; weights 2pi/n.
QuadratureRule periodic_trapezoid(int n);

}  // namespace biocon
