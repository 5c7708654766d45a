#include "biocon/radiation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "biocon/quadrature.hpp"

namespace biocon {

namespace {

constexpr double kTauFloor = 1e-12;  // clamp for log-singular wall queries
constexpr double kEulerGamma = 0.57721566490153286060651209008240243;
constexpr double kSnellWaterIndex = 1.333;

// Grading map B : [0,1] -> [0,1], B'(x) = 140 x^3 (1-x)^3, so nodes crowd
// ~x^4 into both faces where lambda has tau*log(tau) behaviour. The map is
// symmetric, B(1-x) = 1 - B(x), which the evaluation exploits for precision.
double grade_raw(double x) {
  return x * x * x * x * (35.0 + x * (-84.0 + x * (70.0 - 20.0 * x)));
}

double grade(double x) { return x <= 0.5 ? grade_raw(x) : 1.0 - grade_raw(1.0 - x); }

double grade_deriv(double x) {
  const double y = x * (1.0 - x);
  return 140.0 * y * y * y;
}

double grade_inverse(double y) {
  if (y <= 0.0) return 0.0;
  if (y >= 1.0) return 1.0;
  double x = y < 0.5 ? std::pow(y / 35.0, 0.25) : 1.0 - std::pow((1.0 - y) / 35.0, 0.25);
  x = std::clamp(x, 1e-12, 1.0 - 1e-12);
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 80; ++it) {
    const double f = grade(x) - y;
    (f > 0.0 ? hi : lo) = x;
    const double d = grade_deriv(x);
    double step = d > 0.0 ? f / d : 0.0;
    double xn = x - step;
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    if (std::abs(xn - x) < 1e-16) return xn;
    x = xn;
  }
  return x;
}

constexpr double kBinom[4][4] = {
    {1, 0, 0, 0}, {1, 1, 0, 0}, {1, 2, 1, 0}, {1, 3, 3, 1}};

// E_1(x) = -gamma - ln x + sum_p c_p x^p with c_p = (-1)^{p+1} / (p * p!).
struct E1SeriesCoef {
  double c[32];
  E1SeriesCoef() {
    double fact = 1.0;
    for (int p = 1; p < 32; ++p) {
      fact *= p;
      c[p] = ((p & 1) ? 1.0 : -1.0) / (p * fact);
    }
  }
};
const E1SeriesCoef kE1;

// int_a^b u^j ln u du, evaluated as a difference of antiderivatives.
double log_moment(int j, double u) {
  if (u <= 0.0) return 0.0;
  const double r = 1.0 / (j + 1);
  return std::pow(u, j + 1) * r * (std::log(u) - r);
}

// Moments M_m = int_0^1 s^m E_1(h |delta - s|) ds for the kink-adjacent case
// |delta| <= a few cell widths (so h * u stays in the series radius), plus the
// d/d(delta) moments when dM is non-null. The kink splits the cell into two
// monotone sides handled by binomial shifts s = delta -/+ u; the principal
// value across an interior kink pairs the two log terms exactly.
void near_moments(double h, double delta, double M[4], double dM[4]) {
  for (int m = 0; m < 4; ++m) {
    M[m] = (-kEulerGamma - std::log(h)) / (m + 1);
    if (dM) dM[m] = 0.0;
  }
  const bool left = delta > 0.0, right = delta < 1.0;
  const double aL = std::max(delta - 1.0, 0.0), bL = delta;
  const double aR = std::max(-delta, 0.0), bR = 1.0 - delta;

  auto side = [&](double a, double b, bool is_left) {
    const double xa = h * a, xb = h * b;
    // powers of delta and of the endpoints, reused across m and j
    double dpow[4] = {1.0, delta, delta * delta, delta * delta * delta};
    for (int j = 0; j <= 3; ++j) {
      // log part and series part of int u^j * (-ln u + sum c_p (h u)^p) du
      double piece = -(log_moment(j, b) - log_moment(j, a));
      double bp = std::pow(b, j + 1), ap = std::pow(a, j + 1);
      double tb = bp, ta = ap;  // tracks b^{j+1} xb^p and a^{j+1} xa^p
      for (int p = 1; p < 32; ++p) {
        tb *= xb;
        ta *= xa;
        const double term = kE1.c[p] * (tb - ta) / (j + p + 1);
        piece += term;
        if (std::abs(term) < 1e-19 && p > 3) break;
      }
      const double sj = is_left ? ((j & 1) ? -1.0 : 1.0) : 1.0;
      for (int m = j; m <= 3; ++m)
        M[m] += kBinom[m][j] * dpow[m - j] * sj * piece;
    }
  };
  if (left) side(aL, bL, true);
  if (right) side(aR, bR, false);

  if (!dM) return;
  // dM_m = -int s^m sign(delta - s) e^{-h u} / u ds; the j = 0 Frullani-type
  // log terms from the two sides of an interior kink cancel in pairs.
  auto ein = [&](double x) {  // sum_{p>=1} (-x)^p / (p * p!)
    double s = 0.0, t = 1.0, fact = 1.0;
    for (int p = 1; p < 32; ++p) {
      fact *= p;
      t *= -x;
      const double term = t / (p * fact);
      s += term;
      if (std::abs(term) < 1e-19 && p > 3) break;
    }
    return s;
  };
  auto kj = [&](int j, double a, double b) {  // int_a^b u^{j-1} e^{-h u} du
    const double xa = h * a, xb = h * b;
    double s = 0.0, tb = std::pow(b, j), ta = std::pow(a, j), sgn = 1.0;
    double fact = 1.0;
    for (int p = 0; p < 32; ++p) {
      if (p > 0) {
        fact *= p;
        tb *= xb;
        ta *= xa;
        sgn = -sgn;
      }
      const double term = sgn * (tb - ta) / (fact * (j + p));
      s += term;
      if (std::abs(term) < 1e-19 && p > 3) break;
    }
    return s;
  };
  const double dpow[4] = {1.0, delta, delta * delta, delta * delta * delta};
  // j = 0 log terms
  double j0;
  if (left && right) {
    j0 = (std::log(bR) + ein(h * bR)) - (std::log(bL) + ein(h * bL));
  } else if (left) {
    const double a = std::max(aL, 1e-300);
    j0 = -(std::log(bL / a) + ein(h * bL) - ein(h * a));
  } else {
    const double a = std::max(aR, 1e-300);
    j0 = std::log(bR / a) + ein(h * bR) - ein(h * a);
  }
  for (int m = 0; m <= 3; ++m) dM[m] += dpow[m] * j0;
  for (int j = 1; j <= 3; ++j) {
    const double kL = left ? kj(j, aL, bL) : 0.0;
    const double kR = right ? kj(j, aR, bR) : 0.0;
    const double sj = (j & 1) ? -1.0 : 1.0;
    for (int m = j; m <= 3; ++m)
      dM[m] += kBinom[m][j] * dpow[m - j] * (kR - sj * kL);
  }
}

// Far cells: the kernel is analytic across the cell, a fixed Gauss rule is
// accurate to machine precision once the kink is >= 2 cell widths away.
void far_moments(double h, double delta, double M[4], double dM[4]) {
  static const QuadratureRule g8 = gauss_legendre(8, 0.0, 1.0);
  for (int m = 0; m < 4; ++m) {
    M[m] = 0.0;
    if (dM) dM[m] = 0.0;
  }
  const double gap = h * (delta < 0.0 ? -delta : delta - 1.0);
  if (gap > 740.0) return;  // kernel underflows
  for (std::size_t g = 0; g < g8.size(); ++g) {
    const double s = g8.nodes[g], w = g8.weights[g];
    const double u = std::abs(delta - s), x = h * u;
    const double e1 = x > 740.0 ? 0.0 : exp_integral(1, x);
    double sm = 1.0;
    if (!dM) {
      for (int m = 0; m < 4; ++m, sm *= s) M[m] += w * sm * e1;
    } else {
      const double dv = -(delta > s ? 1.0 : -1.0) * (x > 740.0 ? 0.0 : std::exp(-x) / u);
      for (int m = 0; m < 4; ++m, sm *= s) {
        M[m] += w * sm * e1;
        dM[m] += w * sm * dv;
      }
    }
  }
}

void cell_moments(double h, double delta, double M[4], double dM[4]) {
  if (delta > -3.0 && delta < 4.0)
    near_moments(h, delta, M, dM);
  else
    far_moments(h, delta, M, dM);
}

}  // namespace

double RadiationParams::theta_r() const {
  double deg;
  if (theta_r_deg) {
    deg = *theta_r_deg;
  } else if (theta_r_mode == ThetaRMode::snell_water) {
    deg = std::asin(std::sin(theta_i_deg * M_PI / 180.0) / kSnellWaterIndex) * 180.0 / M_PI;
  } else {
    deg = theta_i_deg;
  }
  return deg * M_PI / 180.0;
}

double RadiationParams::cos_theta_r() const { return std::cos(theta_r()); }

RadiationField::RadiationField(const RadiationParams& params) : p_(params) {
  if (!(p_.kappa > 0.0)) throw std::invalid_argument("radiation: kappa must be > 0");
  if (p_.omega < 0.0 || p_.omega > 1.0)
    throw std::invalid_argument("radiation: omega must lie in [0, 1]");
  if (p_.I_D < 0.0 || p_.I_t < 0.0)
    throw std::invalid_argument("radiation: irradiances must be >= 0");
  if (p_.theta_i_deg < 0.0 || p_.theta_i_deg >= 90.0)
    throw std::invalid_argument("radiation: incidence angle must lie in [0, 90)");
  if (p_.n_fie < 32) throw std::invalid_argument("radiation: n_fie too small");
  if (p_.n_table < 64) throw std::invalid_argument("radiation: n_table too small");

  mu_r_ = p_.cos_theta_r();
  if (mu_r_ < 1e-6) throw std::invalid_argument("radiation: beam too close to grazing");
  // The integral equation is solved for G/I_t; with a pure diffuse source
  // (I_t = 0) fall back to an unscaled field.
  const double scale = (p_.I_t > 0.0) ? p_.I_t : 1.0;
  diffuse_ratio_ = p_.I_D / scale;

  // Grow the grid with optical depth (interpolation error scales like
  // kappa^2 / n^4), and keep the widest cell small enough that the kink
  // window of the product quadrature stays inside the kernel-series radius.
  n_ = p_.n_fie;
  if (p_.kappa > 1.0)
    n_ = static_cast<int>(std::ceil(p_.n_fie * std::pow(p_.kappa, 0.75)));
  n_ = std::max(n_, static_cast<int>(std::ceil(12.5 * p_.kappa)));
  nodes_.resize(n_ + 1);
  for (int i = 0; i <= n_; ++i) nodes_[i] = p_.kappa * grade(double(i) / n_);
  nodes_[n_] = p_.kappa;

  cells_.resize(n_);
  for (int c = 0; c < n_; ++c) {
    Cell& cell = cells_[c];
    cell.a = nodes_[c];
    cell.h = nodes_[c + 1] - nodes_[c];
    cell.s0 = std::clamp(c - 1, 0, n_ - 3);
    Eigen::Matrix4d V;
    for (int k = 0; k < 4; ++k) {
      const double q = (nodes_[cell.s0 + k] - cell.a) / cell.h;
      double qq = 1.0;
      for (int m = 0; m < 4; ++m, qq *= q) V(k, m) = qq;
    }
    const Eigen::Matrix4d Vinv = V.inverse();
    for (int m = 0; m < 4; ++m)
      for (int k = 0; k < 4; ++k) cell.coef[m][k] = Vinv(m, k);
  }

  // Nystrom system I - (omega/2) W with product-integration weight rows.
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n_ + 1, n_ + 1);
  Eigen::VectorXd b(n_ + 1);
  double M[4], wk[4];
  if (p_.omega > 0.0) {
    for (int i = 0; i <= n_; ++i) {
      const double tau = nodes_[i];
      for (const Cell& cell : cells_) {
        cell_moments(cell.h, (tau - cell.a) / cell.h, M, nullptr);
        for (int k = 0; k < 4; ++k) {
          wk[k] = cell.coef[0][k] * M[0] + cell.coef[1][k] * M[1] +
                  cell.coef[2][k] * M[2] + cell.coef[3][k] * M[3];
          A(i, cell.s0 + k) -= 0.5 * p_.omega * cell.h * wk[k];
        }
      }
    }
  }
  for (int i = 0; i <= n_; ++i) b(i) = boundary_term(nodes_[i]);
  Eigen::VectorXd lam = Eigen::PartialPivLU<Eigen::MatrixXd>(A).solve(b);
  lam_.assign(lam.data(), lam.data() + n_ + 1);

  // Lookup tables on the graded coordinate x, where all fields are smooth
  // enough for uniform cubic interpolation right up to the faces.
  const int N = p_.n_table;
  std::vector<double> lv(N + 1), dv(N + 1), qv(N + 1), gv(N + 1);
  for (int j = 0; j <= N; ++j) {
    const double x = double(j) / N;
    const double tau = std::clamp(p_.kappa * grade(x), kTauFloor, p_.kappa - kTauFloor);
    natural_pair(tau, &lv[j], &dv[j]);
    gv[j] = lv[j] * p_.kappa * grade_deriv(x);
  }
  lam_table_ = detail::CubicTable(0.0, 1.0, std::vector<double>(lv));
  dlam_table_ = detail::CubicTable(0.0, 1.0, std::move(dv));
  dlam_edge_ = p_.kappa * grade(std::min(48.0 / N, 0.45));

  // Top-face flux, then march the exact identity dq/dtau = -(1-omega) I_t
  // lambda through the table (fourth-order cumulative of the x-space values).
  double conv0 = 0.0;
  if (p_.omega > 0.0) {
    static const QuadratureRule g12 = gauss_legendre(12, 0.0, 1.0);
    for (const Cell& cell : cells_)
      for (std::size_t g = 0; g < g12.size(); ++g) {
        const double t = cell.a + cell.h * g12.nodes[g];
        conv0 += cell.h * g12.weights[g] * lam_table_(x_of_tau(t)) * exp_integral(2, t);
      }
  }
  const double q0 = mu_r_ * p_.I_t + p_.I_D - 0.5 * p_.omega * scale * conv0;
  const double hx = 1.0 / N, fcoef = (1.0 - p_.omega) * scale;
  qv[0] = q0;
  for (int j = 0; j < N; ++j) {
    double seg;
    if (j == 0)
      seg = hx * (9.0 * gv[0] + 19.0 * gv[1] - 5.0 * gv[2] + gv[3]) / 24.0;
    else if (j == N - 1)
      seg = hx * (9.0 * gv[N] + 19.0 * gv[N - 1] - 5.0 * gv[N - 2] + gv[N - 3]) / 24.0;
    else
      seg = hx * (-gv[j - 1] + 13.0 * gv[j] + 13.0 * gv[j + 1] - gv[j + 2]) / 24.0;
    qv[j + 1] = qv[j] - fcoef * seg;
  }
  flux_table_ = detail::CubicTable(0.0, 1.0, std::move(qv));
}

double RadiationField::boundary_term(double tau) const {
  return std::exp(-tau / mu_r_) + 2.0 * diffuse_ratio_ * exp_integral(2, tau);
}

double RadiationField::boundary_term_deriv(double tau) const {
  return -std::exp(-tau / mu_r_) / mu_r_ -
         2.0 * diffuse_ratio_ * exp_integral(1, std::max(tau, kTauFloor));
}

void RadiationField::natural_pair(double tau, double* lam, double* dlam) const {
  if (dlam) {
    // Keep the kink strictly inside one cell so the principal-value pairing
    // of the derivative moments stays local.  The nudge must not touch the
    // value evaluation, so when it fires split the two requests.
    const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), tau);
    const int c = std::clamp(int(it - nodes_.begin()) - 1, 0, n_ - 1);
    const double d = (tau - cells_[c].a) / cells_[c].h;
    double tau_d = tau;
    if (d < 1e-7) tau_d = cells_[c].a + 1e-7 * cells_[c].h;
    if (d > 1.0 - 1e-7) tau_d = cells_[c].a + (1.0 - 1e-7) * cells_[c].h;
    if (tau_d != tau) {
      if (lam) natural_pair(tau, lam, nullptr);
      natural_pair(tau_d, nullptr, dlam);
      return;
    }
  }
  double ls = 0.0, ds = 0.0, M[4], dM[4];
  if (p_.omega > 0.0) {
    for (const Cell& cell : cells_) {
      cell_moments(cell.h, (tau - cell.a) / cell.h, M, dlam ? dM : nullptr);
      for (int k = 0; k < 4; ++k) {
        const double v = lam_[cell.s0 + k];
        if (lam)
          ls += cell.h * v *
                (cell.coef[0][k] * M[0] + cell.coef[1][k] * M[1] +
                 cell.coef[2][k] * M[2] + cell.coef[3][k] * M[3]);
        if (dlam)
          ds += v * (cell.coef[0][k] * dM[0] + cell.coef[1][k] * dM[1] +
                     cell.coef[2][k] * dM[2] + cell.coef[3][k] * dM[3]);
      }
    }
  }
  if (lam) *lam = boundary_term(tau) + 0.5 * p_.omega * ls;
  if (dlam) *dlam = boundary_term_deriv(tau) + 0.5 * p_.omega * ds;
}

double RadiationField::x_of_tau(double tau) const { return grade_inverse(tau / p_.kappa); }

double RadiationField::lambda(double tau) const {
  tau = std::clamp(tau, 0.0, p_.kappa);
  return lam_table_(x_of_tau(tau));
}

double RadiationField::dlambda(double tau) const {
  tau = std::clamp(tau, kTauFloor, p_.kappa - kTauFloor);
  if (tau < dlam_edge_ || tau > p_.kappa - dlam_edge_) {
    double d;
    natural_pair(tau, nullptr, &d);
    return d;
  }
  return dlam_table_(x_of_tau(tau));
}

double RadiationField::collimated(double tau) const {
  tau = std::clamp(tau, 0.0, p_.kappa);
  return p_.I_t * std::exp(-tau / mu_r_);
}

double RadiationField::flux(double tau) const {
  tau = std::clamp(tau, 0.0, p_.kappa);
  return flux_table_(x_of_tau(tau));
}

double RadiationField::equation_residual(double tau, int n_check) const {
  tau = std::clamp(tau, 0.0, p_.kappa);
  const double mass = 2.0 - exp_integral(2, tau) - exp_integral(2, p_.kappa - tau);
  const double here = lambda(tau);
  // Integrate the subtracted convolution on each side of the kink at t = tau.
  auto side = [&](double a, double b) {
    if (b - a < 1e-12) return 0.0;
    auto rule = gauss_legendre(n_check / 2, a, b);
    double s = 0.0;
    for (std::size_t j = 0; j < rule.size(); ++j) {
      const double d = std::max(std::abs(tau - rule.nodes[j]), kTauFloor);
      s += rule.weights[j] * (lambda(rule.nodes[j]) - here) * exp_integral(1, d);
    }
    return s;
  };
  const double integral = here * mass + side(0.0, tau) + side(tau, p_.kappa);
  return here - (boundary_term(tau) + 0.5 * p_.omega * integral);
}

double RadiationField::flux_check(double tau) const {
  tau = std::clamp(tau, 0.0, p_.kappa);
  const double scale = (p_.I_t > 0.0) ? p_.I_t : 1.0;
  double q = mu_r_ * p_.I_t * std::exp(-tau / mu_r_) + 2.0 * p_.I_D * exp_integral(3, tau);
  if (p_.omega > 0.0) {
    // Scattered contribution: down-stream minus up-stream E_2 convolutions.
    static const QuadratureRule unit = gauss_legendre(128, 0.0, 1.0);
    auto segment = [&](double a, double b, double sign) {
      const double len = b - a;
      if (len < 1e-14) return 0.0;
      double s = 0.0;
      for (std::size_t j = 0; j < unit.size(); ++j) {
        const double t = a + len * unit.nodes[j];
        s += len * unit.weights[j] * lambda(t) * exp_integral(2, std::abs(tau - t));
      }
      return sign * s;
    };
    q += 0.5 * p_.omega * scale * (segment(0.0, tau, +1.0) + segment(tau, p_.kappa, -1.0));
  }
  return q;
}

}  // namespace biocon
