#pragma once

// Radiation field inside a plane-parallel absorbing/isotropically-scattering
// slab lit from above by an oblique collimated beam plus diffuse skylight.
// Everything here lives in optical-depth coordinates tau in [0, kappa],
// measured downward from the illuminated top face; the mapping z <-> tau is
// supplied by whoever owns the concentration profile.

#include <optional>
#include <vector>

#include "biocon/detail/tables.hpp"

namespace biocon {

// How the in-medium beam angle theta_r is obtained from the incidence angle.
enum class ThetaRMode {
  identity,     // beam direction unchanged across the surface
  snell_water,  // air->water refraction, sin(theta_i) = 1.333 sin(theta_r)
};

struct RadiationParams {
  double kappa = 1.0;   // slab optical thickness
  double omega = 0.4;   // single-scattering albedo, in [0, 1]
  double I_D = 0.0;     // diffuse downward flux at the top face
  double I_t = 1.0;     // collimated beam intensity at the top face
  double theta_i_deg = 0.0;  // beam incidence angle from vertical, degrees

  ThetaRMode theta_r_mode = ThetaRMode::identity;

  // Explicit in-medium angle; outranks theta_r_mode when set.
  std::optional<double> theta_r_deg;

  int n_fie = 256;     // cells in the scattered-field solve
  int n_table = 2048;  // cells in the graded lookup tables

  double theta_r() const;      // in-medium angle, radians
  double cos_theta_r() const;  // its cosine (mu_r)
};

/// Scattered + direct radiation in a slab of optical thickness kappa.
///
/// The scaled total irradiance lambda(tau) = G(tau)/I_t solves a Fredholm
/// integral equation of the second kind with the E_1 kernel. It is solved by
/// product-integration Nystrom collocation: the kernel is integrated exactly
/// against the piecewise-cubic nodal interpolant (closed-form log moments
/// near the kink, Gauss rules on far cells), on a grid graded ~x^4 into both
/// faces because lambda has a log-divergent slope there. Off-node values come
/// from re-applying the integral equation (the natural interpolant), and the
/// flux integrates d(flux)/d(tau) = -(1 - omega) I_t lambda exactly from the
/// top-face value, so the divergence identity holds by construction.
class RadiationField {
 public:
  explicit RadiationField(const RadiationParams& params);

  const RadiationParams& params() const { return p_; }

  /// G(tau)/I_t, the scaled total scalar irradiance.
  double lambda(double tau) const;

  /// d(lambda)/d(tau). Diverges logarithmically at the faces when omega > 0
  /// or I_D > 0; queries there are clamped to a tiny interior offset.
  double dlambda(double tau) const;

  double collimated(double tau) const;  // direct-beam irradiance G^c
  double total(double tau) const { return p_.I_t * lambda(tau); }
  double diffuse(double tau) const { return total(tau) - collimated(tau); }

  /// Vertical radiative flux q(tau), positive downward (the net stream of
  /// light always points into the slab for top illumination).
  double flux(double tau) const;

  /// Residual of the integral equation at an arbitrary tau, evaluated with
  /// an independent fine composite rule; diagnostic for grid adequacy.
  double equation_residual(double tau, int n_check = 512) const;

  /// Flux recomputed from the two-sided E_2 convolution with an independent
  /// quadrature; diagnostic cross-check of the integrated-identity table.
  double flux_check(double tau) const;

  const std::vector<double>& fie_nodes() const { return nodes_; }
  const std::vector<double>& fie_values() const { return lam_; }

 private:
  struct Cell {
    double a = 0.0, h = 0.0;  // left edge and width
    int s0 = 0;               // first node of the 4-point stencil
    double coef[4][4];        // power-basis coefficients of the stencil cubics
  };

  // lambda and d(lambda)/d(tau) from the integral equation itself, given the
  // nodal solution; exact at nodes, O(h^4) between them.
  void natural_pair(double tau, double* lam, double* dlam) const;
  double boundary_term(double tau) const;
  double boundary_term_deriv(double tau) const;
  double x_of_tau(double tau) const;  // invert the grading map

  RadiationParams p_;
  int n_ = 0;               // cell count actually used
  double mu_r_ = 1.0;       // cos(theta_r)
  double diffuse_ratio_ = 0.0;  // I_D / I_t
  std::vector<double> nodes_;   // graded nodes, size n_ + 1
  std::vector<Cell> cells_;     // size n_
  std::vector<double> lam_;     // nodal lambda
  double dlam_edge_ = 0.0;      // direct-evaluation band at the faces
  detail::CubicTable lam_table_, dlam_table_, flux_table_;  // in x space
};

}  // namespace biocon
