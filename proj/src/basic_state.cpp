#include "biocon/basic_state.hpp"

#include <cmath>
#include <stdexcept>

namespace biocon {

namespace {
constexpr double kBlowup = 1e12;
}

BasicState::BasicState(const BasicStateParams& params)
    : p_(params),
      field_(std::make_shared<RadiationField>(params.radiation)),
      taxis_(params.taxis_variant) {
  if (p_.n_z < 51) throw std::invalid_argument("basic state: n_z too small");
  if (p_.V_c < 0.0) throw std::invalid_argument("basic state: V_c must be >= 0");

  const double kappa = p_.radiation.kappa;
  // Bracket and bisect on a coarse marching grid (cheap), then polish the
  // root on the output grid so the stored solution meets tau(0) = kappa to
  // shoot_tol on its own discretization.
  const int n_fine = p_.n_z - 1;
  const int n_search = std::min(n_fine, 2048);

  auto residual_at = [&](double eta, int n_steps) {
    const Shot s = shoot(eta, n_steps);
    return s.blew_up ? 1e30 : s.tau_bottom - kappa;
  };
  auto F = [&](double eta) { return residual_at(eta, n_search); };

  double lo = 1e-8, hi = 1.0;
  double f_lo = F(lo);
  if (f_lo > 0.0) throw std::runtime_error("basic state: bracket failure at tiny eta");
  double f_hi = F(hi);
  while (f_hi < 0.0) {
    hi *= 2.0;
    if (hi > p_.eta_max) throw std::runtime_error("basic state: no equilibrium below eta_max");
    f_hi = F(hi);
  }
  for (int it = 0; it < p_.max_bisect; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = F(mid);
    if (f_mid < 0.0) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
      f_hi = f_mid;
    }
    if (hi - lo < p_.shoot_tol * hi) break;
  }
  eta_ = hi;

  if (n_fine > n_search) {
    // Secant polish against the fine-grid residual; the coarse root is off
    // by the marching truncation error only, so a couple of steps suffice.
    double a = eta_ * (1.0 - 3e-5), b = eta_;
    double fa = residual_at(a, n_fine), fb = residual_at(b, n_fine);
    for (int it = 0; it < 8 && fa != fb; ++it) {
      const double c = b - fb * (b - a) / (fb - fa);
      if (!(c > 0.5 * eta_ && c < 2.0 * eta_)) break;
      a = b;
      fa = fb;
      b = c;
      fb = residual_at(b, n_fine);
      if (std::abs(fb) < p_.shoot_tol * kappa) break;
    }
    if (std::abs(fb) < std::abs(residual_at(eta_, n_fine))) eta_ = b;
  } else {
    // Secant polish inside the coarse bracket.
    double a = lo, b = hi, fa = f_lo, fb = f_hi;
    for (int it = 0; it < 4 && fb != fa; ++it) {
      const double c = b - fb * (b - a) / (fb - fa);
      if (!(c > lo && c < hi)) break;
      a = b;
      fa = fb;
      b = c;
      fb = F(c);
    }
    if (std::abs(fb) < std::abs(f_hi)) eta_ = b;
  }

  // Final pass on the requested grid; store ascending-in-z tables.
  const int n_nodes = p_.n_z;
  const Shot s = shoot(eta_, n_nodes - 1);
  std::vector<double> nv(n_nodes), dnv(n_nodes), tv(n_nodes), dtv(n_nodes);
  for (int j = 0; j < n_nodes; ++j) {
    const int src = n_nodes - 1 - j;  // shot arrays run from z=1 downward
    nv[j] = s.n[src];
    dnv[j] = s.dn[src];
    tv[j] = s.tau[src];
    dtv[j] = -kappa * s.n[src];
  }
  n_table_ = detail::HermiteTable(0.0, 1.0, std::move(nv), std::move(dnv));
  tau_table_ = detail::HermiteTable(0.0, 1.0, std::move(tv), std::move(dtv));

  // Peak concentration: coarse scan, then golden-section refinement.
  const auto& nn = n_table_.values();
  int jmax = 0;
  double nmin = nn[0];
  for (int j = 1; j < n_nodes; ++j) {
    if (nn[j] > nn[jmax]) jmax = j;
    nmin = std::min(nmin, nn[j]);
  }
  if (p_.V_c == 0.0 || nn[jmax] - nmin < 1e-9) {
    peak_ = {0.0, nn[jmax], true};
    return;
  }
  const double h = 1.0 / (n_nodes - 1);
  double a_g = std::max(0.0, jmax * h - h), b_g = std::min(1.0, jmax * h + h);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b_g - gr * (b_g - a_g), x2 = a_g + gr * (b_g - a_g);
  double f1 = n(x1), f2 = n(x2);
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) {
      a_g = x1;
      x1 = x2;
      f1 = f2;
      x2 = a_g + gr * (b_g - a_g);
      f2 = n(x2);
    } else {
      b_g = x2;
      x2 = x1;
      f2 = f1;
      x1 = b_g - gr * (b_g - a_g);
      f1 = n(x1);
    }
  }
  peak_ = {0.5 * (a_g + b_g), n(0.5 * (a_g + b_g)), false};
}

BasicState::Shot BasicState::shoot(double eta, int n_steps) const {
  const double kappa = p_.radiation.kappa;
  const double I_t = (p_.radiation.I_t > 0.0) ? p_.radiation.I_t : 1.0;
  const double h = 1.0 / n_steps;

  Shot s;
  s.n.resize(n_steps + 1);
  s.dn.resize(n_steps + 1);
  s.tau.resize(n_steps + 1);
  s.blew_up = false;

  auto rhs = [&](double tau, double nval, double& dtau, double& dn) {
    const double Gv = I_t * field_->lambda(tau);
    dtau = kappa * nval;  // marching downward: d tau / d(1-z)
    dn = -p_.V_c * taxis_.value(Gv) * nval;
  };

  double tau = 0.0, nval = eta;
  s.tau[0] = 0.0;
  s.n[0] = eta;
  {
    double d1, d2;
    rhs(tau, nval, d1, d2);
    s.dn[0] = -d2;  // store dn/dz (sign flip from downward marching)
  }
  for (int j = 0; j < n_steps; ++j) {
    double k1t, k1n, k2t, k2n, k3t, k3n, k4t, k4n;
    rhs(tau, nval, k1t, k1n);
    rhs(tau + 0.5 * h * k1t, nval + 0.5 * h * k1n, k2t, k2n);
    rhs(tau + 0.5 * h * k2t, nval + 0.5 * h * k2n, k3t, k3n);
    rhs(tau + h * k3t, nval + h * k3n, k4t, k4n);
    tau += h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
    nval += h / 6.0 * (k1n + 2.0 * k2n + 2.0 * k3n + k4n);
    if (!(nval < kBlowup) || !std::isfinite(nval)) {
      s.blew_up = true;
      s.tau_bottom = tau;
      return s;
    }
    if (nval <= 0.0) throw std::runtime_error("basic state: non-positive concentration");
    s.tau[j + 1] = tau;
    s.n[j + 1] = nval;
    double d1, d2;
    rhs(tau, nval, d1, d2);
    s.dn[j + 1] = -d2;
  }
  s.tau_bottom = tau;
  return s;
}

double BasicState::n(double z) const { return n_table_(std::clamp(z, 0.0, 1.0)); }

double BasicState::dn(double z) const {
  z = std::clamp(z, 0.0, 1.0);
  return p_.V_c * taxis_.value(G(z)) * n(z);
}

double BasicState::tau(double z) const { return tau_table_(std::clamp(z, 0.0, 1.0)); }

double BasicState::G(double z) const { return field_->total(tau(z)); }

double BasicState::dG(double z) const {
  z = std::clamp(z, 0.0, 1.0);
  const double I_t = (p_.radiation.I_t > 0.0) ? p_.radiation.I_t : 1.0;
  return I_t * field_->dlambda(tau(z)) * tau_table_.deriv(z);
}

double BasicState::G_c(double z) const { return field_->collimated(tau(z)); }

double BasicState::G_d(double z) const { return field_->diffuse(tau(z)); }

double BasicState::dG_d(double z) const {
  // d(G_c)/dz = kappa n G_c / cos(theta_r)
  const double dGc = p_.radiation.kappa * n(z) * G_c(z) / p_.radiation.cos_theta_r();
  return dG(z) - dGc;
}

double BasicState::T_s(double z) const { return taxis_.value(G(z)); }

double BasicState::q(double z) const { return field_->flux(tau(z)); }

std::vector<double> BasicState::sublayer_locations(double G_crit) const {
  auto f = [&](double z) { return G(z) - G_crit; };
  std::vector<double> roots;
  const int n_scan = 2000;
  double prev = f(0.0);
  for (int j = 1; j <= n_scan; ++j) {
    const double z = static_cast<double>(j) / n_scan;
    const double cur = f(z);
    if (prev == 0.0) roots.push_back((j - 1.0) / n_scan);
    if (prev * cur < 0.0) {
      double a = (j - 1.0) / n_scan, b = z;
      while (b - a > 1e-9) {
        const double m = 0.5 * (a + b);
        (f(a) * f(m) <= 0.0 ? b : a) = m;
      }
      roots.push_back(0.5 * (a + b));
    }
    prev = cur;
  }
  return roots;
}

double BasicState::ode_residual(int n_sample) const {
  double worst = 0.0;
  auto probe = [&](double z) {
    const double r1 = n_table_.deriv(z) - p_.V_c * taxis_.value(G(z)) * n(z);
    const double r2 = tau_table_.deriv(z) + p_.radiation.kappa * n(z);
    worst = std::max(worst, std::max(std::abs(r1), std::abs(r2)));
  };
  for (int i = 0; i < n_sample; ++i) probe((i + 0.5) / n_sample);
  // The interpolation error peaks inside the wall-nearest cells for steep
  // profiles, so probe those cell midpoints explicitly.
  const double h = 1.0 / (p_.n_z - 1);
  const int edge = std::min(128, (p_.n_z - 1) / 2);
  for (int j = 0; j < edge; ++j) {
    probe((j + 0.5) * h);
    probe(1.0 - (j + 0.5) * h);
  }
  return worst;
}

double BasicState::mass() const {
  // Composite Simpson, refined past the node grid so the quadrature sees
  // the interpolant rather than aliasing the nodes.
  const int m = 4 * (p_.n_z - 1);
  const double h = 1.0 / m;
  double s = n(0.0) + n(1.0);
  for (int j = 1; j < m; ++j) s += (j % 2 ? 4.0 : 2.0) * n(j * h);
  return s * h / 3.0;
}

BasicState solve_basic_state(const BasicStateParams& params) { return BasicState(params); }

}  // namespace biocon
