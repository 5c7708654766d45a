#pragma once

// Equilibrium (quiescent) state of the suspension: swimming balances
// diffusion, giving n' = V_c T(G) n with unit total mass, coupled to the
// radiation field through the optical depth tau(z) = kappa int_z^1 n.

#include <memory>
#include <vector>

#include "biocon/detail/tables.hpp"
#include "biocon/radiation.hpp"
#include "biocon/taxis.hpp"

namespace biocon {

struct BasicStateParams {
  RadiationParams radiation;
  double V_c = 15.0;  // swimming number (speed x depth / diffusivity)
  TaxisVariant taxis_variant = TaxisVariant::A;
  int n_z = 16001;  // nodes of the output grid on [0, 1]

  // Shooting controls: bracket for the top concentration and residual tol.
  double eta_max = 1e8;
  double shoot_tol = 1e-12;
  int max_bisect = 200;
};

/// Self-consistent equilibrium profiles, evaluable anywhere in [0, 1] with
/// C^1 cubic Hermite interpolation built from the exact nodal slopes.
class BasicState {
 public:
  BasicState(const BasicStateParams& params);

  const BasicStateParams& params() const { return p_; }
  const RadiationField& field() const { return *field_; }
  const TaxisFunction& taxis() const { return taxis_; }

  double n(double z) const;       // concentration
  double dn(double z) const;      // dn/dz = V_c T(G) n
  double tau(double z) const;     // optical depth above z
  double G(double z) const;       // total irradiance at z
  double dG(double z) const;      // dG/dz
  double G_c(double z) const;     // collimated part
  double G_d(double z) const;     // diffuse part
  double dG_d(double z) const;    // d(G_d)/dz
  double T_s(double z) const;     // taxis response at z
  double q(double z) const;       // radiative flux magnitude at z

  struct Peak {
    double z_max;
    double n_max;
    bool flat;  // uniform profile (V_c = 0): z_max reported as 0 by convention
  };

  /// Peak concentration: grid argmax refined locally.
  Peak max_concentration() const { return peak_; }
  double z_max() const { return peak_.z_max; }

  /// Depths where the total irradiance crosses a given critical value
  /// (the sublayer locations); all sign-change roots, refined to 1e-8.
  std::vector<double> sublayer_locations(double G_crit) const;

  /// L_inf residual of n' - V_c T(G) n over a random interior sample;
  /// diagnostic for grid adequacy.
  double ode_residual(int n_sample = 256) const;

  /// Total mass int_0^1 n dz recomputed with fine quadrature.
  double mass() const;

  double eta() const { return eta_; }  // converged top concentration n(1)

 private:
  struct Shot {
    std::vector<double> n, dn, tau;
    double tau_bottom;
    bool blew_up;
  };
  Shot shoot(double eta, int n_steps) const;

  BasicStateParams p_;
  std::shared_ptr<const RadiationField> field_;
  TaxisFunction taxis_;
  double eta_ = 1.0;
  Peak peak_{0.0, 1.0, true};
  detail::HermiteTable n_table_, tau_table_;
};

BasicState solve_basic_state(const BasicStateParams& params);

}  // namespace biocon
