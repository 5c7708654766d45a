#include "biocon/taxis.hpp"

#include <cmath>

namespace biocon {

namespace {
constexpr double kGRef = 3.8;   // irradiance where the response bottoms out
constexpr double kA1 = 0.8;
constexpr double kA2 = 0.1;
constexpr double kW1 = 1.5 * M_PI;
constexpr double kW2 = 0.5 * M_PI;
}  // namespace

TaxisFunction::TaxisFunction(TaxisVariant v)
    : variant_(v), c_(v == TaxisVariant::A ? 0.252 : 0.135) {
  // Locate the response zero once; T is positive at G=1, negative at 2.5.
  double lo = 1.0, hi = 2.5;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (value(mid) > 0.0 ? lo : hi) = mid;
  }
  g_c_ = 0.5 * (lo + hi);
}

// T(G) = 0.8 sin(3pi/2 chi) - 0.1 sin(pi/2 chi), chi = (G/3.8) e^{c(3.8-G)}.
double TaxisFunction::value(double G) const {
  const double chi = (G / kGRef) * std::exp(c_ * (kGRef - G));
  return kA1 * std::sin(kW1 * chi) - kA2 * std::sin(kW2 * chi);
}

double TaxisFunction::deriv(double G) const {
  const double e = std::exp(c_ * (kGRef - G));
  const double chi = (G / kGRef) * e;
  const double dchi = e * (1.0 - c_ * G) / kGRef;
  return (kA1 * kW1 * std::cos(kW1 * chi) - kA2 * kW2 * std::cos(kW2 * chi)) * dchi;
}

double TaxisFunction::deriv2(double G) const {
  const double e = std::exp(c_ * (kGRef - G));
  const double chi = (G / kGRef) * e;
  const double dchi = e * (1.0 - c_ * G) / kGRef;
  const double d2chi = e * c_ * (c_ * G - 2.0) / kGRef;
  const double first = kA1 * kW1 * std::cos(kW1 * chi) - kA2 * kW2 * std::cos(kW2 * chi);
  const double second = -kA1 * kW1 * kW1 * std::sin(kW1 * chi) + kA2 * kW2 * kW2 * std::sin(kW2 * chi);
  return second * dchi * dchi + first * d2chi;
}

std::array<double, 3> mean_swim_direction(double T_value, const std::array<double, 3>& q) {
  const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
  if (norm == 0.0) return {0.0, 0.0, 0.0};
  return {-T_value * q[0] / norm, -T_value * q[1] / norm, -T_value * q[2] / norm};
}

}  // namespace biocon
