#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "biocon/basic_state.hpp"
#include "biocon/perturbation.hpp"
#include "biocon/quadrature.hpp"
#include "biocon/radiation.hpp"
#include "oracles.hpp"

using biocon::BasicState;
using biocon::BasicStateParams;
using biocon::Complex;
using biocon::ComplexProfile;
using biocon::GammaCoefficients;
using biocon::GammaForm;
using biocon::PerturbationParams;
using biocon::PerturbationSolver;
using biocon::PerturbedRadiation;
using biocon::RadiationField;
using biocon::RadiationParams;
using biocon::ResponseMatrices;

namespace {

constexpr double kPi = 3.14159265358979323846;

BasicStateParams make_params(double V_c, double kappa, double omega, double I_D,
                             double theta_deg) {
  BasicStateParams p;
  p.V_c = V_c;
  p.radiation.kappa = kappa;
  p.radiation.omega = omega;
  p.radiation.I_D = I_D;
  p.radiation.theta_i_deg = theta_deg;
  return p;
}

// Shared reference state: strong stratification, scattering, oblique beam.
const BasicState& ref_state() {
  static BasicState bs = solve_basic_state(make_params(15.0, 1.0, 0.4, 0.5, 40.0));
  return bs;
}

// Smooth real test amplitude with an analytic antiderivative.
double phi_f(double z) { return 0.3 - 1.1 * z + 0.8 * z * z + 0.6 * std::sin(kPi * z); }
double theta_f(double z) {  // int_1^z phi_f
  return 0.3 * (z - 1.0) - 1.1 * (z * z - 1.0) / 2 + 0.8 * (z * z * z - 1.0) / 3 +
         0.6 * (-std::cos(kPi * z) - 1.0) / kPi;
}

ComplexProfile nodal_phi(int n_z) {
  ComplexProfile phi(n_z);
  for (int i = 0; i < n_z; ++i) phi[i] = phi_f(double(i) / (n_z - 1));
  return phi;
}

double sup_abs(const ComplexProfile& a) {
  double m = 0;
  for (const Complex& v : a) m = std::max(m, std::abs(v));
  return m;
}

double sup_diff(const ComplexProfile& a, const ComplexProfile& b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// The solver's ordinate set, reproduced from its documented construction:
// Gauss-Legendre in t = -ln(mu) on [0, 16], azimuth fold of n_phi
// equal-weight nodes onto distinct cos(phi) values.
struct Ordinates {
  std::vector<double> mu, wmu, c, wc;
};

Ordinates make_ordinates(int n_mu, int n_phi) {
  Ordinates o;
  biocon::QuadratureRule gl = biocon::gauss_legendre(n_mu, 0.0, 16.0);
  o.mu.resize(n_mu);
  o.wmu.resize(n_mu);
  for (int i = 0; i < n_mu; ++i) {
    o.mu[i] = std::exp(-gl.nodes[i]);
    o.wmu[i] = gl.weights[i] * o.mu[i];
  }
  int nc = n_phi / 2 + 1;
  o.c.resize(nc);
  o.wc.resize(nc);
  for (int j = 0; j <= (nc - 1) / 2; ++j) o.c[j] = std::cos(kPi * j / (nc - 1));
  for (int j = (nc - 1) / 2 + 1; j < nc; ++j) o.c[j] = -o.c[nc - 1 - j];
  o.c[0] = 1.0;
  o.c[nc - 1] = -1.0;
  if (nc % 2 == 1) o.c[(nc - 1) / 2] = 0.0;
  for (int j = 0; j < nc; ++j)
    o.wc[j] = (2.0 * kPi / n_phi) * ((j == 0 || j == nc - 1) ? 1.0 : 2.0);
  return o;
}

}  // namespace

TEST_CASE("zero amplitude gives an exactly zero response") {
  PerturbationParams pp;
  pp.n_z = 101;
  PerturbationSolver ps(ref_state(), pp);
  ps.set_wavenumber(2.0, 0.0);
  PerturbedRadiation pr = ps.solve(ComplexProfile(pp.n_z, 0.0));
  CHECK(sup_abs(pr.g1_c) == 0.0);
  CHECK(sup_abs(pr.g1_d) == 0.0);
  CHECK(sup_abs(pr.dg1_d) == 0.0);
  CHECK(sup_abs(pr.P) == 0.0);
  CHECK(sup_abs(pr.Q) == 0.0);
  CHECK(pr.converged);
}

TEST_CASE("collimated response: zero mode and transparent limits") {
  const BasicState& bs = ref_state();
  std::vector<double> z = {0.0, 0.25, 0.5, 0.75, 1.0};
  ComplexProfile zero(z.size(), 0.0);
  ComplexProfile out = biocon::perturbed_collimated(bs, z, zero);
  CHECK(sup_abs(out) == 0.0);

  // Nearly transparent medium: the beam response scales away with kappa.
  BasicState thin = solve_basic_state(make_params(15.0, 1e-12, 0.4, 0.5, 40.0));
  ComplexProfile theta(z.size());
  for (size_t i = 0; i < z.size(); ++i) theta[i] = theta_f(z[i]);
  ComplexProfile thin_out = biocon::perturbed_collimated(thin, z, theta);
  CHECK(sup_abs(thin_out) < 1e-9);
}

TEST_CASE("collimated response matches a finite difference of the beam law") {
  const BasicState& bs = ref_state();
  const RadiationParams& rp = bs.params().radiation;
  double mur = rp.cos_theta_r();
  double kap = rp.kappa;
  double eps = 1e-6;

  int nz = 41;
  std::vector<double> z(nz);
  ComplexProfile theta(nz);
  for (int i = 0; i < nz; ++i) {
    z[i] = double(i) / (nz - 1);
    theta[i] = theta_f(z[i]);
  }
  ComplexProfile got = biocon::perturbed_collimated(bs, z, theta);

  double worst = 0.0, scale = 0.0;
  for (int i = 0; i < nz; ++i) {
    double th = theta[i].real();
    double gp = rp.I_t * std::exp(-(bs.tau(z[i]) - eps * kap * th) / mur);
    double gm = rp.I_t * std::exp(-(bs.tau(z[i]) + eps * kap * th) / mur);
    double fd = (gp - gm) / (2 * eps);
    worst = std::max(worst, std::abs(got[i].real() - fd));
    scale = std::max(scale, std::abs(fd));
  }
  CHECK(worst / scale < 1e-7);  // contract asks 1e-5; measured ~1e-9
}

TEST_CASE("axisymmetric diffuse response equals the background Frechet derivative") {
  const BasicState& bs = ref_state();
  PerturbationParams pp;
  PerturbationSolver ps(bs, pp);
  PerturbedRadiation pr = ps.solve(nodal_phi(pp.n_z));

  // Reference: re-solve the background radiation problem with the column
  // density perturbed by eps * Phi.  Adding eps*Phi to n rescales the total
  // optical depth to kappa(1 + eps*T) and shifts the optical coordinate of
  // height z by -eps*kappa*Theta(z).
  double eps = 1e-6;
  double kap = bs.params().radiation.kappa;
  double T = -theta_f(0.0);  // integral of phi_f over the slab
  RadiationParams rp = bs.params().radiation;
  rp.n_fie = 512;
  RadiationParams rp_p = rp, rp_m = rp;
  rp_p.kappa = kap * (1 + eps * T);
  rp_m.kappa = kap * (1 - eps * T);
  RadiationField fp(rp_p), fm(rp_m);

  double worst = 0.0, scale = 0.0;
  for (size_t i = 0; i < pr.z.size(); ++i) {
    double tau = bs.tau(pr.z[i]);
    double th = pr.theta[i].real();
    double fd = (fp.diffuse(tau - eps * kap * th) - fm.diffuse(tau + eps * kap * th)) / (2 * eps);
    worst = std::max(worst, std::abs(pr.g1_d[i].real() - fd) + std::abs(pr.g1_d[i].imag()));
    scale = std::max(scale, std::abs(fd));
  }
  CHECK(worst / scale < 1e-4);  // binding bound
  CHECK(worst / scale < 6e-5);  // measured 2.6e-5; regression margin 2x
}

TEST_CASE("axisymmetric mode carries no horizontal flux") {
  PerturbationParams pp;
  pp.n_z = 101;
  PerturbationSolver ps(ref_state(), pp);
  PerturbedRadiation pr = ps.solve(nodal_phi(pp.n_z));
  CHECK(sup_abs(pr.P) == 0.0);
  CHECK(sup_abs(pr.Q) == 0.0);
  CHECK(sup_abs(pr.P_mid) == 0.0);
  CHECK(sup_abs(pr.Q_mid) == 0.0);
}

TEST_CASE("mode orientation only rotates the flux moments") {
  PerturbationParams pp;
  pp.n_z = 101;
  PerturbationSolver ps(ref_state(), pp);
  ComplexProfile phi = nodal_phi(pp.n_z);

  ps.set_wavenumber(3.0, 0.0);
  PerturbedRadiation axis = ps.solve(phi);
  ps.set_wavenumber(1.8, 2.4);  // same k = 3
  PerturbedRadiation rot = ps.solve(phi);

  CHECK(sup_diff(axis.g1_d, rot.g1_d) == 0.0);  // identical sweeps
  double worst_p = 0.0, worst_q = 0.0;
  for (size_t i = 0; i < axis.P.size(); ++i) {
    worst_p = std::max(worst_p, std::abs(rot.P[i] - (1.8 / 3.0) * axis.P[i]));
    worst_q = std::max(worst_q, std::abs(rot.Q[i] - (2.4 / 3.0) * axis.P[i]));
  }
  double s = sup_abs(axis.P);
  CHECK(worst_p / s < 1e-14);
  CHECK(worst_q / s < 1e-14);

  // Restoring the original wavenumber reproduces the original solution.
  ps.set_wavenumber(3.0, 0.0);
  PerturbedRadiation again = ps.solve(phi);
  CHECK(sup_diff(axis.g1_d, again.g1_d) == 0.0);
  CHECK(sup_diff(axis.P, again.P) == 0.0);
}

TEST_CASE("response is linear in the mode amplitude") {
  PerturbationParams pp;
  pp.n_z = 101;
  PerturbationSolver ps(ref_state(), pp);
  ps.set_wavenumber(2.0, 0.0);
  ComplexProfile phi = nodal_phi(pp.n_z);
  Complex alpha(1.3, -0.7);
  ComplexProfile phi_s(phi.size());
  for (size_t i = 0; i < phi.size(); ++i) phi_s[i] = alpha * phi[i];

  PerturbedRadiation a = ps.solve(phi);
  PerturbedRadiation b = ps.solve(phi_s);
  double worst = 0.0;
  for (size_t i = 0; i < phi.size(); ++i) {
    worst = std::max(worst, std::abs(b.g1_d[i] - alpha * a.g1_d[i]));
    worst = std::max(worst, std::abs(b.P[i] - alpha * a.P[i]));
    worst = std::max(worst, std::abs(b.g1_c[i] - alpha * a.g1_c[i]));
    worst = std::max(worst, std::abs(b.dg1_d[i] - alpha * a.dg1_d[i]));
  }
  CHECK(worst / sup_abs(a.g1_d) < 1e-10);  // contract bound; measured ~1e-15
}

TEST_CASE("conjugating the amplitude conjugates the response") {
  PerturbationParams pp;
  pp.n_z = 101;
  PerturbationSolver ps(ref_state(), pp);
  ps.set_wavenumber(2.0, 0.0);

  ComplexProfile phi(pp.n_z);
  for (int i = 0; i < pp.n_z; ++i) {
    double z = double(i) / (pp.n_z - 1);
    phi[i] = Complex(phi_f(z), 0.4 * std::sin(2 * kPi * z) - 0.2 * z);
  }
  ComplexProfile phi_c(phi.size());
  for (size_t i = 0; i < phi.size(); ++i) phi_c[i] = std::conj(phi[i]);

  PerturbedRadiation a = ps.solve(phi);
  PerturbedRadiation b = ps.solve(phi_c);
  double worst_g = 0.0, worst_p = 0.0;
  for (size_t i = 0; i < phi.size(); ++i) {
    worst_g = std::max(worst_g, std::abs(b.g1_d[i] - std::conj(a.g1_d[i])));
    // The flux moment picks up i * sin components only: anti-conjugation.
    worst_p = std::max(worst_p, std::abs(b.P[i] + std::conj(a.P[i])));
  }
  CHECK(worst_g / sup_abs(a.g1_d) < 1e-12);
  CHECK(worst_p / std::max(1e-300, sup_abs(a.P)) < 1e-12);
}

TEST_CASE("pure absorption decouples the scattering iteration") {
  BasicState bs = solve_basic_state(make_params(15.0, 1.0, 0.0, 0.5, 40.0));
  PerturbationParams pp;
  pp.n_z = 101;
  PerturbationSolver ps(bs, pp);
  ps.set_wavenumber(2.0, 0.0);
  PerturbedRadiation pr = ps.solve(nodal_phi(pp.n_z));
  CHECK(pr.iterations == 1);
  CHECK(pr.converged);
  CHECK(sup_abs(pr.g1_d) > 0.0);  // the absorbed-light sink still responds
}

TEST_CASE("doubling the angular grid at a resolved state changes nothing material") {
  // Moderate stratification: the angular content of the response is smooth
  // and the ordinate set converges spectrally.  (The strongly stratified
  // reference state is covered by the noise-bound test below.)
  BasicState bs = solve_basic_state(make_params(2.0, 1.0, 0.4, 0.5, 40.0));
  auto run = [&](int nmu, int nphi) {
    PerturbationParams pp;
    pp.n_mu = nmu;
    pp.n_phi = nphi;
    PerturbationSolver ps(bs, pp);
    ps.set_wavenumber(3.0, 0.0);
    return ps.solve(nodal_phi(pp.n_z));
  };
  PerturbedRadiation a = run(48, 48);
  PerturbedRadiation b = run(96, 96);
  CHECK(sup_diff(a.g1_d, b.g1_d) < 1e-5);  // measured 9.3e-7
  CHECK(sup_diff(a.P, b.P) < 1e-5);        // measured 8.1e-7
  CHECK(sup_diff(a.Q, b.Q) < 1e-5);
  CHECK(sup_abs(a.P) > 1e-3);  // the moment being compared is not vacuously 0
}

TEST_CASE("angular noise bound at the strongly stratified reference state") {
  // n(0) ~ 0.01 here: grazing ordinates cross a near-void region where the
  // per-ray phase greatly outruns the optical decay, so a fixed angular grid
  // samples (rather than resolves) those rays.  The doubling difference then
  // measures a noise floor, not smooth-field convergence; this pins its
  // magnitude so regressions are caught.
  auto run = [&](int nmu, int nphi) {
    PerturbationParams pp;
    pp.n_mu = nmu;
    pp.n_phi = nphi;
    PerturbationSolver ps(ref_state(), pp);
    ps.set_wavenumber(3.0, 0.0);
    return ps.solve(nodal_phi(pp.n_z));
  };
  PerturbedRadiation a = run(24, 24);
  PerturbedRadiation b = run(48, 48);
  CHECK(sup_diff(a.g1_d, b.g1_d) < 5e-3);  // measured 2.1e-3
  CHECK(sup_diff(a.P, b.P) < 2e-3);        // measured 6.1e-4
}

TEST_CASE("vertical grid refinement is converged at the default resolution") {
  auto run = [&](int nz) {
    PerturbationParams pp;
    pp.n_z = nz;
    PerturbationSolver ps(ref_state(), pp);
    ps.set_wavenumber(3.0, 0.0);
    return ps.solve(nodal_phi(pp.n_z));
  };
  PerturbedRadiation a = run(201);
  PerturbedRadiation b = run(401);
  double worst_g = 0.0, worst_d = 0.0, worst_p = 0.0;
  for (int i = 0; i < 201; ++i) {
    worst_g = std::max(worst_g, std::abs(a.g1_d[i] - b.g1_d[2 * i]));
    worst_d = std::max(worst_d, std::abs(a.dg1_d[i] - b.dg1_d[2 * i]));
    worst_p = std::max(worst_p, std::abs(a.P[i] - b.P[2 * i]));
  }
  CHECK(worst_g < 1e-6);  // measured 6.7e-8
  CHECK(worst_p < 1e-6);
  CHECK(worst_d < 5e-4);  // derivative at grazing ordinates; measured 1.1e-4
}

TEST_CASE("ordinate set reconstructs the background field it sweeps through") {
  PerturbationParams pp;
  PerturbationSolver ps(ref_state(), pp);
  CHECK(ps.basic_reconstruction_error() < 5e-6);  // measured 5.4e-7
}

TEST_CASE("iteration metadata and warm restarts") {
  PerturbationParams pp;
  pp.n_z = 101;
  PerturbationSolver ps(ref_state(), pp);
  ps.set_wavenumber(2.0, 0.0);
  ComplexProfile phi = nodal_phi(pp.n_z);
  PerturbedRadiation cold = ps.solve(phi);
  CHECK(cold.converged);
  CHECK(cold.iterations > 1);
  CHECK(cold.sup_change < pp.tol);
  CHECK(cold.n_mu == pp.n_mu);
  CHECK(cold.n_phi == pp.n_phi);

  PerturbedRadiation warm = ps.solve(phi, &cold);
  CHECK(warm.converged);
  CHECK(warm.iterations <= 2);
  // Different iteration paths agree only to the fixed-point stop (rel 1e-8
  // on a field of order 1e-2); measured 1.6e-10.
  CHECK(sup_diff(warm.g1_d, cold.g1_d) < 2e-9);
}

TEST_CASE("theta accumulation matches the analytic antiderivative") {
  PerturbationParams pp;
  PerturbationSolver ps(ref_state(), pp);
  PerturbedRadiation pr = ps.solve(nodal_phi(pp.n_z));
  CHECK(pr.theta.back() == Complex(0.0, 0.0));
  double worst = 0.0;
  for (size_t i = 0; i < pr.z.size(); ++i)
    worst = std::max(worst, std::abs(pr.theta[i] - theta_f(pr.z[i])));
  CHECK(worst < 1e-9);  // measured 3.6e-10

  const std::vector<double>& x = ps.z_half();
  double worst_mid = 0.0;
  for (size_t i = 0; i + 1 < pr.z.size(); ++i)
    worst_mid = std::max(worst_mid, std::abs(pr.theta_mid[i] - theta_f(x[2 * i + 1])));
  CHECK(worst_mid < 1e-9);
}

TEST_CASE("no swimming means no stability coefficients") {
  BasicState still = solve_basic_state(make_params(0.0, 1.0, 0.4, 0.5, 40.0));
  PerturbationParams pp;
  pp.n_z = 101;
  PerturbationSolver ps(still, pp);
  ps.set_wavenumber(2.0, 0.0);
  PerturbedRadiation pr = ps.solve(nodal_phi(pp.n_z));
  GammaCoefficients g = ps.gammas(pr);
  CHECK(sup_abs(g.gamma0) == 0.0);
  CHECK(sup_abs(g.gamma1) == 0.0);
  CHECK(sup_abs(g.gamma2) == 0.0);
}

TEST_CASE("beam-only coefficients reduce to the product rule of the shading term") {
  // No scattering, no skylight: the scattered response vanishes identically,
  // so the collected coefficients carry the whole shading effect through the
  // beam channel: gamma0 = 0, gamma1 = (V_c kappa / mu_r) d/dz [n_s T' Gc]
  // and gamma2 = 2 (V_c kappa / mu_r) n_s T' Gc for the axisymmetric mode.
  // gamma1 is checked against a high-order finite difference of the product
  // assembled from independently sampled factors.
  BasicState bs = solve_basic_state(make_params(15.0, 1.0, 0.0, 0.0, 40.0));
  PerturbationParams pp;
  pp.n_z = 401;
  PerturbationSolver ps(bs, pp);
  PerturbedRadiation pr = ps.solve(nodal_phi(pp.n_z));
  CHECK(sup_abs(pr.g1_d) == 0.0);
  CHECK(sup_abs(pr.P) == 0.0);

  GammaCoefficients g = ps.gammas(pr);
  CHECK(sup_abs(g.gamma0) == 0.0);
  CHECK(sup_abs(g.gamma0_mid) == 0.0);

  double vc = bs.params().V_c;
  double kap = bs.params().radiation.kappa;
  double mur = bs.params().radiation.cos_theta_r();
  int n = pp.n_z;
  double h = 1.0 / (n - 1);
  std::vector<double> prod(n);
  for (int i = 0; i < n; ++i) {
    double z = i * h;
    prod[i] = bs.n(z) * bs.taxis().deriv(bs.G(z)) * bs.G_c(z);
  }
  // Richardson-extrapolated five-point differences: the product decays on a
  // 1/(V_c kappa) scale, too steep for plain fourth order at this h.
  double worst1 = 0.0, scale1 = 0.0, worst2 = 0.0, scale2 = 0.0;
  for (int i = 4; i < n - 4; ++i) {
    double fd1 = (prod[i - 2] - 8.0 * prod[i - 1] + 8.0 * prod[i + 1] - prod[i + 2]) / (12 * h);
    double fd2 =
        (prod[i - 4] - 8.0 * prod[i - 2] + 8.0 * prod[i + 2] - prod[i + 4]) / (24 * h);
    double fd = (16.0 * fd1 - fd2) / 15.0;
    worst1 = std::max(worst1, std::abs(g.gamma1[i] - vc * kap / mur * fd));
    scale1 = std::max(scale1, std::abs(vc * kap / mur * fd));
    worst2 = std::max(worst2, std::abs(g.gamma2[i] - 2.0 * vc * kap / mur * prod[i]));
    scale2 = std::max(scale2, std::abs(2.0 * vc * kap / mur * prod[i]));
  }
  CHECK(worst1 / scale1 < 1e-6);
  // gamma2 also carries V_c T' dG_d, which is only zero here up to the
  // residual of the basic diffuse field; measured 1.4e-10.
  CHECK(worst2 / scale2 < 1e-8);
}

TEST_CASE("collected coefficients satisfy substitution consistency on random modes") {
  const BasicState& bs = ref_state();
  PerturbationParams pp;
  pp.n_z = 101;
  PerturbationSolver ps(bs, pp);

  std::mt19937 rng(20250817u);
  std::uniform_real_distribution<double> amp(-1.0, 1.0), wav(0.5, 6.0);
  for (int trial = 0; trial < 20; ++trial) {
    ComplexProfile phi(pp.n_z);
    double a0 = amp(rng), a1 = amp(rng), a2 = amp(rng), a3 = amp(rng);
    double b1 = amp(rng), b2 = amp(rng);
    for (int i = 0; i < pp.n_z; ++i) {
      double z = double(i) / (pp.n_z - 1);
      phi[i] = Complex(a0 + a1 * z + a2 * std::cos(kPi * z) + a3 * std::sin(2 * kPi * z),
                       b1 * std::sin(kPi * z) + b2 * z * z);
    }
    ps.set_wavenumber(wav(rng), 0.0);
    PerturbedRadiation pr = ps.solve(phi);
    GammaCoefficients g = ps.gammas(pr);  // throws if inconsistent beyond 1e-6
    CHECK(g.consistency_residual < 1e-6);
  }
}

TEST_CASE("printed coefficient variant agrees only at normal incidence") {
  PerturbationParams pp;
  pp.n_z = 101;

  BasicState normal = solve_basic_state(make_params(15.0, 1.0, 0.4, 0.5, 0.0));
  PerturbationSolver ps0(normal, pp);
  ps0.set_wavenumber(2.0, 0.0);
  PerturbedRadiation pr0 = ps0.solve(nodal_phi(pp.n_z));
  GammaCoefficients col0 = ps0.gammas(pr0, GammaForm::collected);
  GammaCoefficients pub0 = ps0.gammas(pr0, GammaForm::published);
  CHECK(sup_diff(col0.gamma1, pub0.gamma1) / sup_abs(col0.gamma1) < 1e-12);
  CHECK(sup_diff(col0.gamma2, pub0.gamma2) / sup_abs(col0.gamma2) < 1e-12);
  CHECK(pub0.consistency_residual < 1e-6);

  PerturbationSolver ps40(ref_state(), pp);
  ps40.set_wavenumber(2.0, 0.0);
  PerturbedRadiation pr40 = ps40.solve(nodal_phi(pp.n_z));
  GammaCoefficients col40 = ps40.gammas(pr40, GammaForm::collected);
  GammaCoefficients pub40 = ps40.gammas(pr40, GammaForm::published);
  CHECK(col40.consistency_residual < 1e-6);
  CHECK(pub40.consistency_residual > 1e-2);  // measured ~5.3
  CHECK(sup_diff(col40.gamma1, pub40.gamma1) > 1.0);
}

TEST_CASE("invalid inputs are rejected") {
  PerturbationParams pp;
  pp.n_z = 4;
  CHECK_THROWS_AS(PerturbationSolver(ref_state(), pp), std::invalid_argument);
  pp = PerturbationParams{};
  pp.n_phi = 7;
  CHECK_THROWS_AS(PerturbationSolver(ref_state(), pp), std::invalid_argument);
  pp = PerturbationParams{};
  pp.n_z = 101;
  PerturbationSolver ps(ref_state(), pp);
  CHECK_THROWS_AS(ps.solve(ComplexProfile(100, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(ps.set_wavenumber(std::nan(""), 0.0), std::invalid_argument);
}

TEST_CASE("dense response maps agree with the iterative solve") {
  PerturbationParams pp;
  pp.n_z = 101;
  pp.tol = 1e-12;  // the comparison is limited by the fixed-point stop
  PerturbationSolver ps(ref_state(), pp);
  ps.set_wavenumber(2.0, 0.0);
  ComplexProfile phi = nodal_phi(pp.n_z);
  PerturbedRadiation pr = ps.solve(phi);
  ResponseMatrices rm = ps.response_matrices();

  Eigen::VectorXcd v(pp.n_z);
  for (int i = 0; i < pp.n_z; ++i) v(i) = phi[i];
  Eigen::VectorXcd g = rm.G * v, dg = rm.dG * v, p = rm.P * v, th = rm.theta * v;
  Eigen::VectorXcd gm = rm.G_mid * v, pm = rm.P_mid * v;

  double worst = 0.0;
  for (int i = 0; i < pp.n_z; ++i) {
    worst = std::max(worst, std::abs(g(i) - pr.g1_d[i]));
    worst = std::max(worst, std::abs(dg(i) - pr.dg1_d[i]));
    worst = std::max(worst, std::abs(p(i) - pr.P[i]));
    worst = std::max(worst, std::abs(th(i) - pr.theta[i]));
  }
  for (int i = 0; i + 1 < pp.n_z; ++i) {
    worst = std::max(worst, std::abs(gm(i) - pr.g1_d_mid[i]));
    worst = std::max(worst, std::abs(pm(i) - pr.P_mid[i]));
  }
  CHECK(worst < 1e-10);  // LU closure vs fixed-point iteration at tol 1e-12
}

TEST_CASE("uniform absorbing slab has a closed-form response") {
  // V_c = 0 makes the background concentration exactly uniform and omega = 0
  // silences scattering, so each downward ordinate integrates an exponential
  // source in closed form and upward ordinates stay dark.  This checks the
  // transfer sweep (attenuation, kernel moments, source interpolation) and
  // the moment assembly against exact arithmetic, on the solver's own
  // ordinate set.
  BasicStateParams bp = make_params(0.0, 1.0, 0.0, 0.5, 40.0);
  BasicState bs = solve_basic_state(bp);
  PerturbationParams pp;
  pp.n_z = 201;
  PerturbationSolver ps(bs, pp);
  double l = 2.0;
  ps.set_wavenumber(l, 0.0);

  Complex beta(1.0, 2.0);
  ComplexProfile phi(pp.n_z);
  for (int i = 0; i < pp.n_z; ++i)
    phi[i] = std::exp(beta * (double(i) / (pp.n_z - 1)));
  PerturbedRadiation pr = ps.solve(phi);
  CHECK(pr.iterations == 1);

  double kap = bp.radiation.kappa;
  double ID = bp.radiation.I_D;
  Ordinates o = make_ordinates(pp.n_mu, pp.n_phi);

  auto exact = [&](double z, int deriv) {
    Complex g(0.0, 0.0), p(0.0, 0.0);
    for (size_t im = 0; im < o.mu.size(); ++im) {
      double mu = o.mu[im];
      double s = std::sqrt(std::max(0.0, 1.0 - mu * mu));
      for (size_t jc = 0; jc < o.c.size(); ++jc) {
        double xi = s * o.c[jc];
        Complex ilxi(0.0, l * xi);
        Complex A = beta - ilxi / mu;
        Complex e1 = std::exp(beta - (kap + ilxi) * (1.0 - z) / mu);
        Complex e2 = std::exp(beta * z - kap * (1.0 - z) / mu);
        Complex psi = -(kap * ID / (kPi * mu * A)) * (e1 - e2);
        if (deriv) {
          Complex S = -kap * (ID / kPi) * std::exp(-kap * (1.0 - z) / mu) *
                      std::exp(beta * z);
          psi = (S - (ilxi + kap) * psi) / (-mu);
        }
        double w = o.wmu[im] * o.wc[jc];
        g += w * psi;
        p += w * xi * psi;
      }
    }
    struct R { Complex g, p; };
    return R{g, p};
  };

  double worst_g = 0.0, worst_p = 0.0, worst_d = 0.0, worst_gm = 0.0;
  double scale_g = sup_abs(pr.g1_d), scale_p = sup_abs(pr.P);
  const std::vector<double>& x = ps.z_half();
  for (int i = 0; i < pp.n_z; ++i) {
    auto r = exact(pr.z[i], 0);
    worst_g = std::max(worst_g, std::abs(pr.g1_d[i] - r.g));
    worst_p = std::max(worst_p, std::abs(pr.P[i] - r.p));
    auto rd = exact(pr.z[i], 1);
    worst_d = std::max(worst_d, std::abs(pr.dg1_d[i] - rd.g));
  }
  for (int i = 0; i + 1 < pp.n_z; ++i) {
    auto r = exact(x[2 * i + 1], 0);
    worst_gm = std::max(worst_gm, std::abs(pr.g1_d_mid[i] - r.g));
  }
  // With omega = 0 the whole downward source is the attenuated boundary
  // term, which the sweep integrates analytically, so agreement is limited
  // only by the moment series and roundoff.
  CHECK(worst_g / scale_g < 1e-9);
  CHECK(worst_gm / scale_g < 1e-9);
  CHECK(worst_p / scale_p < 1e-8);
  CHECK(worst_d / (scale_g * kap) < 1e-7);
}

TEST_CASE("convenience wrappers match the class interface") {
  const BasicState& bs = ref_state();
  PerturbationParams pp;
  pp.n_z = 101;
  ComplexProfile phi = nodal_phi(pp.n_z);

  PerturbedRadiation a = biocon::solve_perturbed_diffuse(bs, phi, 2.0, 0.0, pp);
  PerturbationSolver ps(bs, pp);
  ps.set_wavenumber(2.0, 0.0);
  PerturbedRadiation b = ps.solve(phi);
  CHECK(sup_diff(a.g1_d, b.g1_d) == 0.0);
  CHECK(sup_diff(a.P, b.P) == 0.0);

  GammaCoefficients ga = biocon::gamma_coefficients(bs, a);
  GammaCoefficients gb = ps.gammas(b);
  CHECK(sup_diff(ga.gamma0, gb.gamma0) == 0.0);
}
