#include "biocon/quadrature.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace biocon {

namespace {

constexpr double kEulerGamma = 0.57721566490153286060651209;

// E_1 by its ascending series: -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k k!).
// Converges quickly for x <= 1 (terms shrink like x^k / k!).
double e1_series(double x) {
  double sum = -kEulerGamma - std::log(x);
  double term = 1.0;  // x^k / k!
  for (int k = 1; k <= 40; ++k) {
    term *= x / k;
    const double add = ((k & 1) ? term : -term) / k;
    sum += add;
    if (std::abs(add) < 1e-18 * std::abs(sum) + 1e-300) break;
  }
  return sum;
}

// E_1(x) = e^{-x} / (x + 1 - 1/(x + 3 - 4/(x + 5 - ...))), a_k = k^2.
// Evaluated with the modified Lentz algorithm; solid for x > 1.
double e1_continued_fraction(double x) {
  const double tiny = 1e-300;
  double b = x + 1.0;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int k = 1; k <= 200; ++k) {
    const double a = -static_cast<double>(k) * k;
    b += 2.0;
    d = 1.0 / (a * d + b);
    c = b + a / c;
    const double delta = c * d;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x) * h;
}

}  // namespace

double exp_integral(int n, double x) {
  if (n < 1) throw std::domain_error("exp_integral: order must be >= 1, got " + std::to_string(n));
  if (x < 0.0) throw std::domain_error("exp_integral: argument must be >= 0, got " + std::to_string(x));
  if (x == 0.0) {
    if (n == 1) throw std::domain_error("exp_integral: E_1 diverges at x = 0");
    return 1.0 / (n - 1);
  }
  if (x > 700.0) return 0.0;

  double e = (x <= 1.0) ? e1_series(x) : e1_continued_fraction(x);
  // n E_{n+1}(x) = exp(-x) - x E_n(x)
  if (n > 1) {
    const double ex = std::exp(-x);
    for (int m = 1; m < n; ++m) e = (ex - x * e) / m;
  }
  return e;
}

QuadratureRule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need at least one node");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  rule.interval = {a, b};

  const double xm = 0.5 * (b + a);
  const double xl = 0.5 * (b - a);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Chebyshev estimate of the i-th root, then Newton on P_n.
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    rule.nodes[i] = xm - xl * z;
    rule.nodes[n - 1 - i] = xm + xl * z;
    rule.weights[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  return rule;
}

QuadratureRule periodic_trapezoid(int n) {
  if (n < 4) throw std::invalid_argument("periodic_trapezoid: need at least 4 nodes");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.assign(n, 2.0 * M_PI / n);
  rule.interval = {0.0, 2.0 * M_PI};
  for (int j = 0; j < n; ++j) rule.nodes[j] = 2.0 * M_PI * j / n;
  return rule;
}

}  // namespace biocon
