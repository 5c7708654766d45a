#pragma once

// Uniform-grid lookup tables with cubic evaluation. Internal utility.

#include <cassert>
#include <cmath>
#include <vector>

namespace biocon::detail {

/// Values on a uniform grid over [a, b], evaluated with a shifted 4-point
/// Lagrange stencil (clamped near the ends). Error O(h^4) for smooth data.
class CubicTable {
 public:
  CubicTable() = default;
  CubicTable(double a, double b, std::vector<double> values)
      : a_(a), b_(b), v_(std::move(values)) {
    assert(v_.size() >= 4);
    h_ = (b_ - a_) / static_cast<double>(v_.size() - 1);
  }

  double operator()(double x) const {
    const int n = static_cast<int>(v_.size());
    double t = (x - a_) / h_;
    if (t < 0.0) t = 0.0;
    if (t > n - 1) t = n - 1;
    int i = static_cast<int>(t) - 1;  // stencil start: i .. i+3
    if (i < 0) i = 0;
    if (i > n - 4) i = n - 4;
    const double u = t - i;  // in [0,3]
    const double w0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0;
    const double w1 = u * (u - 2.0) * (u - 3.0) / 2.0;
    const double w2 = -u * (u - 1.0) * (u - 3.0) / 2.0;
    const double w3 = u * (u - 1.0) * (u - 2.0) / 6.0;
    return w0 * v_[i] + w1 * v_[i + 1] + w2 * v_[i + 2] + w3 * v_[i + 3];
  }

  double lo() const { return a_; }
  double hi() const { return b_; }
  double step() const { return h_; }
  const std::vector<double>& values() const { return v_; }

 private:
  double a_ = 0.0, b_ = 1.0, h_ = 1.0;
  std::vector<double> v_;
};

/// Cubic Hermite table: values and first derivatives on a uniform grid.
/// Exactly reproduces nodal values/slopes; error O(h^4) in between.
class HermiteTable {
 public:
  HermiteTable() = default;
  HermiteTable(double a, double b, std::vector<double> values, std::vector<double> slopes)
      : a_(a), b_(b), v_(std::move(values)), d_(std::move(slopes)) {
    assert(v_.size() == d_.size() && v_.size() >= 2);
    h_ = (b_ - a_) / static_cast<double>(v_.size() - 1);
  }

  double operator()(double x) const {
    const auto [i, u] = locate(x);
    const double u2 = u * u, u3 = u2 * u;
    return (2 * u3 - 3 * u2 + 1) * v_[i] + (u3 - 2 * u2 + u) * h_ * d_[i] +
           (-2 * u3 + 3 * u2) * v_[i + 1] + (u3 - u2) * h_ * d_[i + 1];
  }

  double deriv(double x) const {
    const auto [i, u] = locate(x);
    const double u2 = u * u;
    return ((6 * u2 - 6 * u) * v_[i] + (3 * u2 - 4 * u + 1) * h_ * d_[i] +
            (-6 * u2 + 6 * u) * v_[i + 1] + (3 * u2 - 2 * u) * h_ * d_[i + 1]) /
           h_;
  }

  double lo() const { return a_; }
  double hi() const { return b_; }
  const std::vector<double>& values() const { return v_; }
  const std::vector<double>& slopes() const { return d_; }

 private:
  std::pair<int, double> locate(double x) const {
    const int n = static_cast<int>(v_.size());
    double t = (x - a_) / h_;
    if (t < 0.0) t = 0.0;
    if (t > n - 1) t = n - 1;
    int i = static_cast<int>(t);
    if (i > n - 2) i = n - 2;
    return {i, t - i};
  }

  double a_ = 0.0, b_ = 1.0, h_ = 1.0;
  std::vector<double> v_, d_;
};

}  // namespace biocon::detail
