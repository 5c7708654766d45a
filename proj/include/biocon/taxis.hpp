#pragma once

// Phototaxis response: mean swimming speed along the light gradient as a
// function of the local total irradiance G. Positive response below the
// preferred intensity (swim toward light), negative above (swim away).

#include <array>

namespace biocon {

enum class TaxisVariant { A, B };

/// Smooth empirical response curve with a single sign change at G_c.
/// Variant A peaks lower (G_c near 1.3), variant B higher (G_c near 1.9);
/// they differ only in the exponential shaping rate.
class TaxisFunction {
 public:
  explicit TaxisFunction(TaxisVariant v = TaxisVariant::A);

  double operator()(double G) const { return value(G); }
  double value(double G) const;
  double deriv(double G) const;   // dT/dG
  double deriv2(double G) const;  // d2T/dG2

  TaxisVariant variant() const { return variant_; }
  double shaping_rate() const { return c_; }

  /// The single zero of T in [1, 2.5]: cells accumulate where G crosses it.
  double critical_G() const { return g_c_; }

 private:
  TaxisVariant variant_;
  double c_;
  double g_c_;
};

/// Mean swimming direction <p> = -T(G) q / |q| for radiative flux q.
std::array<double, 3> mean_swim_direction(double T_value, const std::array<double, 3>& q);

}  // namespace biocon
