#pragma once

// Linear radiation response to a normal-mode concentration disturbance.
//
// A disturbance n1 = Phi(z) exp(sigma t + i(l x + m y)) changes the light
// field at first order in two ways: the collimated beam sees a perturbed
// optical path (an algebraic expression in Theta = int_1^z Phi), and the
// scattered field obeys a transfer equation per direction (xi, eta, nu) with
// sources in Phi and in the perturbed total irradiance.  This module solves
// that transfer problem with discrete ordinates, returns the perturbed
// irradiances and horizontal flux moments, and assembles the coefficient
// profiles Gamma_0..Gamma_2 that the stability equations need.
//
// All outputs are linear in Phi; solve() is const and safe to call from
// several threads on one solver instance.

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "biocon/basic_state.hpp"

namespace biocon {

using Complex = std::complex<double>;
using ComplexProfile = std::vector<Complex>;

struct PerturbationParams {
  int n_z = 201;      // uniform grid nodes on [0, 1]
  int n_mu = 24;      // Gauss-Legendre polar nodes per hemisphere
  int n_phi = 24;     // equal-weight azimuth nodes (even)
  double tol = 1e-8;  // relative sup-norm stop for the scattering iteration
  int max_iter = 200;
};

/// Perturbed radiation fields for one concentration mode, on the solver's
/// uniform z grid (nodal arrays) and at cell centers (the *_mid arrays, used
/// by the collocation discretization of the stability equations).
struct PerturbedRadiation {
  std::vector<double> z;  // grid nodes
  ComplexProfile phi;     // input mode amplitude at the nodes
  ComplexProfile theta;   // Theta(z) = int_1^z Phi, so theta back() == 0
  ComplexProfile g1_c;    // perturbed collimated irradiance
  ComplexProfile g1_d;    // perturbed scattered (diffuse) irradiance
  ComplexProfile dg1_d;   // d(g1_d)/dz, evaluated from the transfer equation
  ComplexProfile P;       // x-flux moment int Psi xi dOmega
  ComplexProfile Q;       // y-flux moment int Psi eta dOmega

  ComplexProfile phi_mid, theta_mid, g1_c_mid, g1_d_mid, dg1_d_mid, P_mid, Q_mid;

  double l = 0.0, m = 0.0;  // horizontal wavenumber components
  int n_mu = 0, n_phi = 0;
  int iterations = 0;
  double sup_change = 0.0;  // last relative sup-norm update of g1_d
  bool converged = false;
};

/// Coefficients of the concentration stability equation written in Theta:
/// gamma0 + gamma1 Theta + (sigma + k^2 + gamma2) DTheta + V_c T_s D2Theta
/// - D3Theta = -(Dn_s) W.  gamma0 carries everything proportional to the
/// scattered response and the horizontal flux; gamma1 and gamma2 are fixed
/// by the basic state alone.
struct GammaCoefficients {
  ComplexProfile gamma0, gamma1, gamma2;
  ComplexProfile gamma0_mid, gamma1_mid, gamma2_mid;
  double consistency_residual = 0.0;  // sup |direct form - collected form|
  double consistency_z = 0.0;         // where the sup is attained
};

/// Which algebraic form of gamma1/gamma2 to assemble. `collected` carries the
/// 1/cos(theta_r) factors that the oblique-beam path length introduces and is
/// the internally consistent form; `published` reproduces a widely printed
/// variant that drops them (it agrees at normal incidence and is kept only
/// for comparison reports).
enum class GammaForm { collected, published };

/// Dense linear maps from the nodal mode amplitude Phi to the radiation
/// response, for building matrix eigenproblems.  Row blocks are grid nodes
/// (size n) or cell centers (size n-1); columns are nodal Phi.
struct ResponseMatrices {
  Eigen::MatrixXcd G, dG, P;              // g1_d, d(g1_d)/dz, P at nodes
  Eigen::MatrixXcd G_mid, dG_mid, P_mid;  // the same at cell centers
  Eigen::MatrixXcd theta, theta_mid;      // Theta = int_1^z Phi
};

class PerturbationSolver {
 public:
  PerturbationSolver(const BasicState& bs, const PerturbationParams& params = {});

  const PerturbationParams& params() const { return p_; }
  const BasicState& basic() const { return *bs_; }
  const std::vector<double>& z_nodes() const { return z_nodes_; }
  const std::vector<double>& z_half() const { return x_; }  // nodes + centers
  double l() const { return l_; }
  double m() const { return m_; }

  /// Rebuild the per-ordinate transfer weights for a new horizontal mode.
  /// Only k = sqrt(l^2 + m^2) enters the sweeps; l and m reappear in the
  /// orientation of (P, Q).
  void set_wavenumber(double l, double m);

  /// Solve the perturbed transfer problem for nodal amplitudes Phi
  /// (size n_z).  `warm` seeds the scattering iteration with a previous
  /// solution's g1_d.  Throws std::runtime_error when the iteration fails
  /// to contract within max_iter (message carries the ratio estimate).
  PerturbedRadiation solve(const ComplexProfile& phi,
                           const PerturbedRadiation* warm = nullptr) const;

  /// Assemble the stability-equation coefficients for a solved mode.
  /// Verifies that the collected form reproduces a direct term-by-term
  /// evaluation of the concentration equation (both built from the same
  /// primitive fields); throws std::runtime_error when the sup residual
  /// exceeds 1e-6 * max(1, sup|Phi|).
  GammaCoefficients gammas(const PerturbedRadiation& pr,
                           GammaForm form = GammaForm::collected) const;

  /// Dense response maps at the current wavenumber, assembled by sweeping
  /// unit sources and solving the scattering closure directly (LU instead of
  /// iteration), so they agree with solve() to the iteration tolerance.
  ResponseMatrices response_matrices() const;

  /// sup |G_d rebuilt from the ordinate set - basic-state G_d|: measures the
  /// angular resolution of the discrete ordinates against the integral
  /// formulation of the unperturbed field.
  double basic_reconstruction_error() const { return basic_check_; }

 private:
  struct SweepAccum;  // defined in the implementation

  void build_ordinates();
  void build_basic_samples();
  void build_basic_intensity();
  void build_weights();  // per (mu, cos phi) transfer-step moments
  void run_sweeps(const ComplexProfile& W1, const ComplexProfile& phi_x,
                  SweepAccum& out) const;
  void theta_from_phi(const ComplexProfile& phi, ComplexProfile& theta_x) const;
  void interp_mid(const ComplexProfile& nodal, ComplexProfile& x_out) const;

  const BasicState* bs_;
  PerturbationParams p_;

  int n_ = 0;  // grid nodes
  int H_ = 0;  // half-grid points (nodes + cell centers)
  double h_ = 0.0, hh_ = 0.0;
  std::vector<double> z_nodes_, x_;

  // basic-state samples on the half grid
  std::vector<double> ns_, dns_, Gs_, dGs_, Gc_, Gd_, dGd_, Ts_, Tp_, Tpp_, qs_;
  std::vector<double> delta_;  // optical thickness of each half step

  // polar nodes/weights on (0,1), azimuth fold cos(phi) values and weights
  std::vector<double> mu_, wmu_, cphi_, wphi_;

  // unperturbed scattered intensity per polar node, both hemispheres
  std::vector<std::vector<double>> I_dn_, I_up_;
  // boundary-entry component of I_dn_, I_D/pi * exp(-depth/mu): the part of
  // the basic intensity that is steeper than any polynomial at grazing mu,
  // integrated analytically in the sweeps (stride: mu * H)
  std::vector<double> sharp_dn_;
  double basic_check_ = 0.0;

  double l_ = 0.0, m_ = 0.0, k_ = 0.0;

  // per (mu, cphi) pair and half step: attenuation and kernel moments
  std::vector<Complex> att_, Q_;       // strides: pair * (H-1), * 6
  std::vector<Complex> osc_;           // per pair: phase-only moments, 6 each
  std::vector<double> curv_;           // per (mu, step): optical curvature / mu
  double mu_r_ = 1.0;                  // cos(theta_r) of the beam
};

/// Perturbed collimated irradiance G_s^c(z) kappa Theta(z) / cos(theta_r) at
/// the given heights; Theta must satisfy Theta(1) = 0 on input.
ComplexProfile perturbed_collimated(const BasicState& bs, const std::vector<double>& z,
                                    const ComplexProfile& theta);

/// One-shot convenience: build a solver on params.n_z nodes (phi.size() must
/// match), set (l, m), and solve.
PerturbedRadiation solve_perturbed_diffuse(const BasicState& bs, const ComplexProfile& phi,
                                           double l, double m,
                                           const PerturbationParams& params = {});

/// One-shot coefficient assembly for a solved mode.
GammaCoefficients gamma_coefficients(const BasicState& bs, const PerturbedRadiation& pr,
                                     GammaForm form = GammaForm::collected);

}  // namespace biocon
