#include "biocon/stability.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace biocon {

namespace {

constexpr double kPi = 3.14159265358979323846;

using Matrix7 = Eigen::Matrix<Complex, 7, 7>;
using Vector7 = Eigen::Matrix<Complex, 7, 1>;
using SparseC = Eigen::SparseMatrix<Complex>;
using TripletC = Eigen::Triplet<Complex>;

// components of the first-order state
constexpr int kW = 0, kW1 = 1, kW2 = 2, kW3 = 3, kTh = 4, kTh1 = 5, kTh2 = 6;

// dy/dz = M(z) y + gamma0(z) e_Th2
Matrix7 system_matrix(double S_c, double k2, Complex sigma, double R, Complex gamma1,
                      Complex gamma2, double vcts, double dns) {
  Matrix7 M = Matrix7::Zero();
  M(kW, kW1) = 1.0;
  M(kW1, kW2) = 1.0;
  M(kW2, kW3) = 1.0;
  M(kW3, kW) = -(sigma / S_c + k2) * k2;
  M(kW3, kW2) = sigma / S_c + 2.0 * k2;
  M(kW3, kTh1) = -R * k2;
  M(kTh, kTh1) = 1.0;
  M(kTh1, kTh2) = 1.0;
  M(kTh2, kW) = dns;
  M(kTh2, kTh) = gamma1;
  M(kTh2, kTh1) = sigma + k2 + gamma2;
  M(kTh2, kTh2) = vcts;
  return M;
}

Matrix7 dM_dR(double k2) {
  Matrix7 M = Matrix7::Zero();
  M(kW3, kTh1) = -k2;
  return M;
}

Matrix7 dM_dsigma(double S_c, double k2) {
  Matrix7 M = Matrix7::Zero();
  M(kW3, kW) = -k2 / S_c;
  M(kW3, kW2) = 1.0 / S_c;
  M(kTh2, kTh1) = 1.0;
  return M;
}

// Five-point first-derivative stencils, fourth order, coefficients / (12 h).
void fd5_stencil(int i, int N, int* idx, double* cf) {
  static const double interior[5] = {1.0, -8.0, 0.0, 8.0, -1.0};
  static const double edge0[5] = {-25.0, 48.0, -36.0, 16.0, -3.0};
  static const double edge1[5] = {-3.0, -10.0, 18.0, -6.0, 1.0};
  if (i == 0) {
    for (int j = 0; j < 5; ++j) idx[j] = j, cf[j] = edge0[j];
  } else if (i == 1) {
    for (int j = 0; j < 5; ++j) idx[j] = j, cf[j] = edge1[j];
  } else if (i == N - 2) {
    for (int j = 0; j < 5; ++j) idx[j] = N - 5 + j, cf[j] = -edge1[4 - j];
  } else if (i == N - 1) {
    for (int j = 0; j < 5; ++j) idx[j] = N - 5 + j, cf[j] = -edge0[4 - j];
  } else {
    for (int j = 0; j < 5; ++j) idx[j] = i - 2 + j, cf[j] = interior[j];
  }
}

// Cubic Lagrange interpolation of component `offset` (stride 7) of a stacked
// state vector on a uniform N-node grid, at z in [0, 1].
Complex interp_state(const Eigen::VectorXcd& v, int offset, int N, double z) {
  double t = z * (N - 1);
  int j = std::clamp(int(std::floor(t)) - 1, 0, N - 4);
  double s = t - j;
  double w0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
  double w1 = s * (s - 2.0) * (s - 3.0) / 2.0;
  double w2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
  double w3 = s * (s - 1.0) * (s - 2.0) / 6.0;
  return w0 * v(offset + 7 * j) + w1 * v(offset + 7 * (j + 1)) + w2 * v(offset + 7 * (j + 2)) +
         w3 * v(offset + 7 * (j + 3));
}

double sup_abs_vec(const Eigen::VectorXcd& v) {
  double m = 0.0;
  for (int i = 0; i < v.size(); ++i) m = std::max(m, std::abs(v(i)));
  return m;
}

// Interpolate an oracle-grid eigenvector onto a finer node grid as a Newton
// seed (profiles only; k/R/sigma are filled by the caller).
EigenSolution interp_seed(const Eigen::VectorXcd& v, int No, const std::vector<double>& z) {
  EigenSolution s;
  s.z = z;
  int n = int(z.size());
  ComplexProfile* dst[7] = {&s.W, &s.dW, &s.d2W, &s.d3W, &s.Theta, &s.dTheta, &s.d2Theta};
  for (int c = 0; c < 7; ++c) {
    dst[c]->resize(n);
    for (int i = 0; i < n; ++i) (*dst[c])[i] = interp_state(v, c, No, z[i]);
  }
  return s;
}

}  // namespace

// Scratch shared by the Newton residual/Jacobian assembly and
// apply_operator, so both are guaranteed to evaluate the same discrete
// operator.
struct StabilitySolver::Work {
  enum class ParamPair { R_only, R_and_imsigma, sigma_complex };

  double k = 0.0, k2 = 0.0, R = 0.0;
  Complex sigma{0.0, 0.0};
  ComplexProfile g0x, g1x, g2x;  // gamma profiles on the half grid
  Complex g1d_wall[2];           // scattered response at z = 0, 1

  Eigen::VectorXcd F;
  Eigen::VectorXd Fscale;
  std::vector<TripletC> trip;
  Eigen::VectorXcd bR, bS;  // border columns dF/dp for the two parameters
  double residual_norm = 0.0;

  // Hermite-Simpson cells plus boundary rows.  Row order: [W, vel2, flux] at
  // z=0, seven rows per cell, [W, vel2, flux, Theta] at z=1.
  void assemble(const Eigen::VectorXcd& y, int n, double h, double S_c,
                const std::vector<double>& vcts, const std::vector<double>& dns,
                const double* snk, const double* beam, BcMode bc, bool want_jacobian,
                ParamPair pp);
};

void StabilitySolver::Work::assemble(const Eigen::VectorXcd& y, int n, double h, double S_c,
                                     const std::vector<double>& vcts,
                                     const std::vector<double>& dns, const double* snk,
                                     const double* beam, BcMode bc, bool want_jacobian,
                                     ParamPair pp) {
  int total = 7 * n;
  F.resize(total);
  Fscale.resize(total);
  if (want_jacobian) {
    trip.clear();
    trip.reserve(size_t(110) * n);
    bR = Eigen::VectorXcd::Zero(total);
    bS = Eigen::VectorXcd::Zero(total);
  }

  int vel2 = (bc == BcMode::paper_equations) ? kW2 : kW1;

  // boundary rows at z = 0
  F(0) = y(kW);
  F(1) = y(vel2);
  F(2) = y(kTh2) - vcts[0] * y(kTh1) - beam[0] * y(kTh) - snk[0] * g1d_wall[0];
  Fscale(0) = 1.0 + std::abs(y(kW));
  Fscale(1) = 1.0 + std::abs(y(vel2));
  Fscale(2) = 1.0 + std::abs(y(kTh2)) + std::abs(vcts[0] * y(kTh1)) +
              std::abs(beam[0] * y(kTh)) + std::abs(snk[0] * g1d_wall[0]);
  if (want_jacobian) {
    trip.emplace_back(0, kW, Complex(1.0, 0.0));
    trip.emplace_back(1, vel2, Complex(1.0, 0.0));
    trip.emplace_back(2, kTh2, Complex(1.0, 0.0));
    trip.emplace_back(2, kTh1, Complex(-vcts[0], 0.0));
    trip.emplace_back(2, kTh, Complex(-beam[0], 0.0));
  }

  Matrix7 dMR = dM_dR(k2);
  Matrix7 dMs = dM_dsigma(S_c, k2);
  Matrix7 I = Matrix7::Identity();

  for (int c = 0; c < n - 1; ++c) {
    int xa = 2 * c, xm = 2 * c + 1, xb = 2 * c + 2;
    Matrix7 Ma = system_matrix(S_c, k2, sigma, R, g1x[xa], g2x[xa], vcts[xa], dns[xa]);
    Matrix7 Mm = system_matrix(S_c, k2, sigma, R, g1x[xm], g2x[xm], vcts[xm], dns[xm]);
    Matrix7 Mb = system_matrix(S_c, k2, sigma, R, g1x[xb], g2x[xb], vcts[xb], dns[xb]);

    Vector7 ya = y.segment<7>(7 * c), yb = y.segment<7>(7 * (c + 1));
    Vector7 ga = Vector7::Zero(), gm = Vector7::Zero(), gb = Vector7::Zero();
    ga(kTh2) = g0x[xa];
    gm(kTh2) = g0x[xm];
    gb(kTh2) = g0x[xb];

    Vector7 fa = Ma * ya + ga;
    Vector7 fb = Mb * yb + gb;
    Vector7 yhat = 0.5 * (ya + yb) + (h / 8.0) * (fa - fb);
    Vector7 fm = Mm * yhat + gm;
    Vector7 C = yb - ya - (h / 6.0) * (fa + 4.0 * fm + fb);

    int row = 3 + 7 * c;
    F.segment<7>(row) = C;
    for (int r = 0; r < 7; ++r)
      Fscale(row + r) = 1.0 + std::abs(ya(r)) + std::abs(yb(r)) +
                        (h / 6.0) * (std::abs(fa(r)) + 4.0 * std::abs(fm(r)) + std::abs(fb(r)));

    if (!want_jacobian) continue;

    Matrix7 A = -I - (h / 6.0) * (Ma + 4.0 * Mm * (0.5 * I + (h / 8.0) * Ma));
    Matrix7 B = I - (h / 6.0) * (Mb + 4.0 * Mm * (0.5 * I - (h / 8.0) * Mb));
    for (int r = 0; r < 7; ++r)
      for (int s = 0; s < 7; ++s) {
        if (A(r, s) != Complex(0.0, 0.0)) trip.emplace_back(row + r, 7 * c + s, A(r, s));
        if (B(r, s) != Complex(0.0, 0.0)) trip.emplace_back(row + r, 7 * (c + 1) + s, B(r, s));
      }

    // border columns: dC/dp = -h/6 [dM (ya + 4 yhat + yb) + h/2 Mm dM (ya - yb)]
    auto border = [&](const Matrix7& dM) -> Vector7 {
      return -(h / 6.0) * (dM * (ya + 4.0 * yhat + yb) + 0.5 * h * (Mm * (dM * (ya - yb))));
    };
    if (pp == ParamPair::R_only) {
      bR.segment<7>(row) = border(dMR);
    } else if (pp == ParamPair::R_and_imsigma) {
      bR.segment<7>(row) = border(dMR);
      bS.segment<7>(row) = Complex(0.0, 1.0) * border(dMs);
    } else {
      bR.segment<7>(row) = border(dMs);  // d/d Re(sigma)
      bS.segment<7>(row) = Complex(0.0, 1.0) * border(dMs);
    }
  }

  // boundary rows at z = 1
  {
    int row = 3 + 7 * (n - 1);
    int last = 7 * (n - 1);
    int xw = 2 * (n - 1);
    F(row) = y(last + kW);
    F(row + 1) = y(last + vel2);
    F(row + 2) = y(last + kTh2) - vcts[xw] * y(last + kTh1) - beam[1] * y(last + kTh) -
                 snk[1] * g1d_wall[1];
    F(row + 3) = y(last + kTh);
    Fscale(row) = 1.0 + std::abs(y(last + kW));
    Fscale(row + 1) = 1.0 + std::abs(y(last + vel2));
    Fscale(row + 2) = 1.0 + std::abs(y(last + kTh2)) + std::abs(vcts[xw] * y(last + kTh1)) +
                      std::abs(beam[1] * y(last + kTh)) + std::abs(snk[1] * g1d_wall[1]);
    Fscale(row + 3) = 1.0 + std::abs(y(last + kTh));
    if (want_jacobian) {
      trip.emplace_back(row, last + kW, Complex(1.0, 0.0));
      trip.emplace_back(row + 1, last + vel2, Complex(1.0, 0.0));
      trip.emplace_back(row + 2, last + kTh2, Complex(1.0, 0.0));
      trip.emplace_back(row + 2, last + kTh1, Complex(-vcts[xw], 0.0));
      trip.emplace_back(row + 2, last + kTh, Complex(-beam[1], 0.0));
      trip.emplace_back(row + 3, last + kTh, Complex(1.0, 0.0));
    }
  }

  residual_norm = 0.0;
  for (int r = 0; r < total; ++r)
    residual_norm = std::max(residual_norm, std::abs(F(r)) / Fscale(r));
}

// ---------------------------------------------------------------------------

StabilitySolver::StabilitySolver(const BasicState& bs, const StabilityParams& params)
    : bs_(&bs),
      p_(params),
      ps_(bs, [&] {
        PerturbationParams q = params.radiation;
        q.n_z = params.n_z;
        return q;
      }()) {
  if (p_.n_z < 9) throw std::invalid_argument("StabilityParams::n_z must be at least 9");
  if (p_.oracle_n_z < 9) throw std::invalid_argument("StabilityParams::oracle_n_z too small");
  if (p_.S_c <= 0.0) throw std::invalid_argument("Schmidt number must be positive");

  n_ = p_.n_z;
  H_ = 2 * n_ - 1;
  h_ = 1.0 / (n_ - 1);
  z_nodes_.resize(n_);
  for (int i = 0; i < n_; ++i) z_nodes_[i] = double(i) / (n_ - 1);

  double Vc = bs_->params().V_c;
  vcts_.resize(H_);
  dns_.resize(H_);
  for (int x = 0; x < H_; ++x) {
    double z = 0.5 * x * h_;
    vcts_[x] = Vc * bs_->T_s(z);
    dns_[x] = bs_->dn(z);
  }
  const auto& rp = bs_->params().radiation;
  double beam_factor = rp.kappa / rp.cos_theta_r();
  for (int w = 0; w < 2; ++w) {
    double z = double(w);
    double tp = bs_->taxis().deriv(bs_->G(z));
    snk_[w] = Vc * bs_->n(z) * tp;
    beam_[w] = snk_[w] * beam_factor * bs_->G_c(z);
  }
}

void StabilitySolver::ensure_wavenumber(double k) {
  if (k != ps_k_) {
    ps_.set_wavenumber(k, 0.0);
    ps_k_ = k;
  }
}

EigenSolution StabilitySolver::pack(double k, const Eigen::VectorXcd& y, double R, Complex sigma,
                                    bool stationary) const {
  EigenSolution s;
  s.k = k;
  s.R = R;
  s.sigma = sigma;
  s.branch = (stationary || std::abs(sigma.imag()) < 1e-6) ? BranchClass::stationary
                                                           : BranchClass::oscillatory;
  s.z = z_nodes_;
  ComplexProfile* dst[7] = {&s.W, &s.dW, &s.d2W, &s.d3W, &s.Theta, &s.dTheta, &s.d2Theta};
  for (int c = 0; c < 7; ++c) {
    dst[c]->resize(n_);
    for (int i = 0; i < n_; ++i) (*dst[c])[i] = y(7 * i + c);
  }
  return s;
}

EigenSolution StabilitySolver::newton(double k, const EigenSolution& init, bool neutral,
                                      bool stationary, double R_fixed) {
  ensure_wavenumber(k);
  if (int(init.W.size()) != n_ || int(init.dTheta.size()) != n_)
    throw std::invalid_argument("newton: initial profiles do not match n_z");

  using PP = Work::ParamPair;
  Eigen::VectorXcd y(7 * n_);
  {
    const ComplexProfile* src[7] = {&init.W,     &init.dW,     &init.d2W, &init.d3W,
                                    &init.Theta, &init.dTheta, &init.d2Theta};
    for (int c = 0; c < 7; ++c)
      for (int i = 0; i < n_; ++i) y(7 * i + c) = (*src[c])[i];
  }
  double R = neutral ? init.R : R_fixed;
  Complex sigma = neutral ? (stationary ? Complex(0.0, 0.0) : Complex(0.0, init.sigma.imag()))
                          : init.sigma;
  PP pp = neutral ? (stationary ? PP::R_only : PP::R_and_imsigma) : PP::sigma_complex;
  if (stationary)
    for (int i = 0; i < 7 * n_; ++i) y(i) = Complex(y(i).real(), 0.0);

  Work w;
  w.k = k;
  w.k2 = k * k;

  PerturbedRadiation pr;
  bool have_pr = false;
  bool params_small = false;
  ComplexProfile phi(n_);
  EigenSolution best;
  best.k = k;
  best.R = R;
  best.sigma = sigma;
  double best_res = -1.0;

  int iter = 0;
  for (; iter < p_.max_newton; ++iter) {
    for (int i = 0; i < n_; ++i) phi[i] = y(7 * i + kTh1);
    pr = ps_.solve(phi, have_pr ? &pr : nullptr);
    have_pr = true;
    GammaCoefficients gam = ps_.gammas(pr);

    auto join = [&](const ComplexProfile& nodal, const ComplexProfile& mid, ComplexProfile& out) {
      out.resize(H_);
      for (int i = 0; i < n_; ++i) out[2 * i] = nodal[i];
      for (int i = 0; i < n_ - 1; ++i) out[2 * i + 1] = mid[i];
    };
    join(gam.gamma0, gam.gamma0_mid, w.g0x);
    join(gam.gamma1, gam.gamma1_mid, w.g1x);
    join(gam.gamma2, gam.gamma2_mid, w.g2x);
    w.g1d_wall[0] = pr.g1_d.front();
    w.g1d_wall[1] = pr.g1_d.back();
    w.R = R;
    w.sigma = sigma;

    w.assemble(y, n_, h_, p_.S_c, vcts_, dns_, snk_, beam_, p_.bc_mode, true, pp);

    if (!std::isfinite(w.residual_norm)) break;
    if (best_res < 0.0 || w.residual_norm < best_res) {
      best = pack(k, y, R, sigma, stationary);
      best.residual_norm = w.residual_norm;
      best_res = w.residual_norm;
    }
    if (w.residual_norm < p_.newton_tol && (params_small || iter == 0)) {
      EigenSolution out = pack(k, y, R, sigma, stationary);
      out.residual_norm = w.residual_norm;
      out.iterations = iter;
      out.converged = true;
      if (!stationary && out.sigma.imag() < 0.0) {
        // report the positive member of the conjugate pair
        out.sigma = std::conj(out.sigma);
        for (auto* f : {&out.W, &out.dW, &out.d2W, &out.d3W, &out.Theta, &out.dTheta,
                        &out.d2Theta})
          for (auto& v : *f) v = std::conj(v);
        out.branch = (std::abs(out.sigma.imag()) < 1e-6) ? BranchClass::stationary
                                                         : BranchClass::oscillatory;
      }
      return out;
    }

    SparseC K(7 * n_, 7 * n_);
    K.setFromTriplets(w.trip.begin(), w.trip.end());
    Eigen::SparseLU<SparseC> lu;
    lu.compute(K);
    if (lu.info() != Eigen::Success) break;

    Eigen::VectorXcd u = lu.solve(-w.F);
    Eigen::VectorXcd v = lu.solve(w.bR);
    Eigen::VectorXcd ws;
    if (pp != PP::R_only) ws = lu.solve(w.bS);

    // bordered closure through the normalization DTheta(0) = 1
    int i1 = kTh1;
    Complex rhs = (y(i1) - 1.0) + u(i1);
    double dp1 = 0.0, dp2 = 0.0;
    if (pp == PP::R_only) {
      double denom = v(i1).real();
      if (std::abs(denom) < 1e-300) break;
      dp1 = rhs.real() / denom;
    } else {
      double a = v(i1).real(), b = ws(i1).real();
      double c = v(i1).imag(), d = ws(i1).imag();
      double det = a * d - b * c;
      if (std::abs(det) < 1e-300) break;
      dp1 = (rhs.real() * d - b * rhs.imag()) / det;
      dp2 = (a * rhs.imag() - rhs.real() * c) / det;
    }

    // keep R steps sane while far from the root
    if (pp != PP::sigma_complex) {
      double capR = 0.7 * std::max(1.0, std::abs(R));
      dp1 = std::clamp(dp1, -capR, capR);
    }

    y += u - dp1 * v;
    if (pp != PP::R_only) y -= dp2 * ws;
    if (pp == PP::R_only) {
      R += dp1;
      params_small = std::abs(dp1) <= p_.param_tol * std::max(1.0, std::abs(R));
      for (int i = 0; i < 7 * n_; ++i) y(i) = Complex(y(i).real(), 0.0);
    } else if (pp == PP::R_and_imsigma) {
      R += dp1;
      sigma += Complex(0.0, dp2);
      params_small = std::abs(dp1) <= p_.param_tol * std::max(1.0, std::abs(R)) &&
                     std::abs(dp2) <= p_.param_tol * std::max(1.0, std::abs(sigma.imag()));
    } else {
      sigma += Complex(dp1, dp2);
      params_small = std::hypot(dp1, dp2) <= p_.param_tol * std::max(1.0, std::abs(sigma));
    }
    if (!std::isfinite(R) || !std::isfinite(sigma.real()) || !std::isfinite(sigma.imag())) break;
  }

  best.iterations = iter;
  best.converged = false;
  return best;
}

// ---------------------------------------------------------------------------
// Dense eigen oracle in second-order form: unknowns are the nodal stacks
// [W; Theta] only, with every derivative entering as a composed dense matrix.
// Pencil K(sigma, R) = K0 + R KR + sigma K1 (linear in sigma), with the
// radiation response entering as dense blocks -- nothing frozen, independent
// of the Hermite-Simpson path.
//
// First-order-system formulations (chained d/dz rows for W..d3W, Theta..d2Theta)
// are avoided deliberately: the non-compact derivative chain admits parasitic
// modes whose Theta is not the antiderivative of DTheta, and the Gamma_1
// coupling amplifies them into spurious positive growth rates. In the
// second-order form Theta = integral of Phi holds by construction.

void StabilitySolver::ensure_oracle_wavenumber(double k) {
  if (!ops_) {
    PerturbationParams q = p_.radiation;
    q.n_z = p_.oracle_n_z;
    ops_ = std::make_unique<PerturbationSolver>(*bs_, q);
    ops_k_ = -1.0;
  }
  if (k == ops_k_) return;
  ops_->set_wavenumber(k, 0.0);
  ops_k_ = k;

  int N = p_.oracle_n_z;
  double h = 1.0 / (N - 1);
  double k2 = k * k;
  double Vc = bs_->params().V_c;

  ResponseMatrices rm = ops_->response_matrices();

  // gamma1/gamma2 do not depend on the mode; evaluate them on the oracle
  // grid through a zero-amplitude perturbation.
  ComplexProfile zero(N, Complex(0.0, 0.0));
  PerturbedRadiation pr0 = ops_->solve(zero);
  GammaCoefficients gam = ops_->gammas(pr0);

  // nodal derivative matrix and its powers
  oD_ = Eigen::MatrixXd::Zero(N, N);
  int idx[5];
  double cf[5];
  for (int i = 0; i < N; ++i) {
    fd5_stencil(i, N, idx, cf);
    for (int j = 0; j < 5; ++j) oD_(i, idx[j]) += cf[j] / (12.0 * h);
  }
  Eigen::MatrixXd D2 = oD_ * oD_;
  Eigen::MatrixXd D3 = D2 * oD_;
  Eigen::MatrixXd A = D2 - k2 * Eigen::MatrixXd::Identity(N, N);

  std::vector<double> a1(N), a2(N), a3(N), vcts(N), dns(N);
  for (int i = 0; i < N; ++i) {
    double z = double(i) / (N - 1);
    double tp = bs_->taxis().deriv(bs_->G(z));
    double tpp = bs_->taxis().deriv2(bs_->G(z));
    a1[i] = Vc * (bs_->dn(z) * tp + bs_->n(z) * tpp * bs_->dG(z));
    a2[i] = Vc * bs_->n(z) * tp;
    a3[i] = Vc * bs_->n(z) * bs_->T_s(z) / bs_->q(z);
    vcts[i] = Vc * bs_->T_s(z);
    dns[i] = bs_->dn(z);
  }

  int total = 2 * N;
  oK0_ = Eigen::MatrixXcd::Zero(total, total);
  oKR_ = Eigen::MatrixXcd::Zero(total, total);
  oK1_ = Eigen::MatrixXcd::Zero(total, total);

  // momentum rows (block row 0):
  //   sigma (A/S_c) W - A^2 W - R k^2 DTheta = 0
  oK0_.block(0, 0, N, N) = (-(A * A)).cast<Complex>();
  oKR_.block(0, N, N, N) = (-k2 * oD_).cast<Complex>();
  oK1_.block(0, 0, N, N) = (A / p_.S_c).cast<Complex>();

  // concentration rows (block row 1):
  //   sigma DTheta - D3 Theta + g1 Theta + (k^2 + g2) DTheta + Vc Ts D2 Theta
  //     + Gamma0[DTheta] + dns W = 0
  Eigen::MatrixXcd conc = (-D3).cast<Complex>();
  for (int i = 0; i < N; ++i) {
    conc.row(i) += (k2 + gam.gamma2[i]) * oD_.row(i).cast<Complex>();
    conc.row(i) += vcts[i] * D2.row(i).cast<Complex>();
    conc(i, i) += gam.gamma1[i];
  }
  Eigen::MatrixXcd map(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      map(i, j) =
          a1[i] * rm.G(i, j) + a2[i] * rm.dG(i, j) - Complex(0.0, 1.0) * k * a3[i] * rm.P(i, j);
  conc += map * oD_.cast<Complex>();
  oK0_.block(N, N, N, N) = conc;
  for (int i = 0; i < N; ++i) oK0_(N + i, i) = dns[i];
  oK1_.block(N, N, N, N) = oD_.cast<Complex>();

  // replace rows nearest the walls with the boundary conditions
  auto clear_row = [&](int r) {
    oK0_.row(r).setZero();
    oKR_.row(r).setZero();
    oK1_.row(r).setZero();
  };
  const Eigen::MatrixXd& vel2 = (p_.bc_mode == BcMode::paper_equations) ? D2 : oD_;
  // momentum block: W = 0 and D2W (or DW) = 0 at both walls
  clear_row(0);
  oK0_(0, 0) = 1.0;
  clear_row(1);
  oK0_.block(1, 0, 1, N) = vel2.row(0).cast<Complex>();
  clear_row(N - 2);
  oK0_.block(N - 2, 0, 1, N) = vel2.row(N - 1).cast<Complex>();
  clear_row(N - 1);
  oK0_(N - 1, N - 1) = 1.0;
  // concentration block: flux rows at both walls, Theta(1) = 0
  auto flux_row = [&](int r, int i, int wall) {
    clear_row(r);
    Eigen::RowVectorXcd row = D2.row(i).cast<Complex>() - vcts[i] * oD_.row(i).cast<Complex>();
    for (int j = 0; j < N; ++j) row -= snk_[wall] * rm.G(i, j) * oD_.row(j).cast<Complex>();
    oK0_.block(r, N, 1, N) = row;
    oK0_(r, N + i) -= beam_[wall];
  };
  flux_row(N + 0, 0, 0);
  flux_row(N + N - 2, N - 1, 1);
  clear_row(N + N - 1);
  oK0_(N + N - 1, N + N - 1) = 1.0;
}

StabilitySolver::OracleModes StabilitySolver::oracle_solve(double R, double k, int n_modes,
                                                           bool with_vectors) {
  ensure_oracle_wavenumber(k);
  int total = int(oK0_.rows());

  // shift-invert: eigenvalues of (K0 + R KR + sh K1)^-1 K1 are 1/(sh - sigma);
  // the shift sits away from both the stationary modes near 0 and the
  // oscillatory pairs at |Im sigma| ~ 10..40.
  Complex sh(0.37, 3.1);
  Eigen::MatrixXcd A = oK0_ + R * oKR_ + sh * oK1_;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A);
  Eigen::MatrixXcd C = lu.solve(oK1_);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces;
  ces.compute(C, with_vectors);
  if (ces.info() != Eigen::Success) throw std::runtime_error("oracle eigensolver failed");

  std::vector<std::pair<Complex, int>> found;
  for (int j = 0; j < total; ++j) {
    Complex lam = ces.eigenvalues()(j);
    if (std::abs(lam) < 1e-12) continue;  // modes mapped to infinity (BC rows)
    Complex sigma = sh - 1.0 / lam;
    if (std::abs(sigma) > 1e8) continue;
    found.emplace_back(sigma, j);
  }
  std::sort(found.begin(), found.end(),
            [](const auto& a, const auto& b) { return a.first.real() > b.first.real(); });
  int m = std::min<int>(n_modes, int(found.size()));
  int N = p_.oracle_n_z;
  OracleModes out;
  out.sigma.resize(m);
  if (with_vectors) out.vectors.resize(7 * N, m);
  for (int j = 0; j < m; ++j) {
    out.sigma[j] = found[j].first;
    if (with_vectors) {
      // expand [W; Theta] to the seven nodal components by differentiation
      Eigen::VectorXcd v = ces.eigenvectors().col(found[j].second);
      Eigen::VectorXcd W = v.head(N), Th = v.tail(N);
      Eigen::VectorXcd W1 = oD_ * W, W2 = oD_ * W1, W3 = oD_ * W2;
      Eigen::VectorXcd Ph = oD_ * Th, Ph2 = oD_ * Ph;
      for (int i = 0; i < N; ++i) {
        out.vectors(7 * i + kW, j) = W(i);
        out.vectors(7 * i + kW1, j) = W1(i);
        out.vectors(7 * i + kW2, j) = W2(i);
        out.vectors(7 * i + kW3, j) = W3(i);
        out.vectors(7 * i + kTh, j) = Th(i);
        out.vectors(7 * i + kTh1, j) = Ph(i);
        out.vectors(7 * i + kTh2, j) = Ph2(i);
      }
    }
  }
  return out;
}

std::vector<Complex> StabilitySolver::eigen_oracle(double R, double k, int n_modes) {
  return oracle_solve(R, k, n_modes, /*with_vectors=*/false).sigma;
}

EigenSolution StabilitySolver::oracle_seed(double k) {
  // Bracket R on the sign of the leading growth rate, narrow the bracket into
  // the Newton basin, then take the corresponding eigenvector.
  auto lead = [&](double R) { return oracle_solve(R, k, 1, false).sigma.at(0).real(); };

  double R = 700.0;
  double f = lead(R);
  double Rlo = 0.0, Rhi = 0.0, flo = 0.0, fhi = 0.0;  // lead < 0 at Rlo, > 0 at Rhi
  if (f > 0.0) {
    Rhi = R;
    fhi = f;
    for (int t = 0; t < 24; ++t) {
      R /= 1.7;
      f = lead(R);
      if (f <= 0.0) {
        Rlo = R;
        flo = f;
        break;
      }
      Rhi = R;
      fhi = f;
      if (R < 1e-2) break;
    }
  } else {
    Rlo = R;
    flo = f;
    for (int t = 0; t < 24; ++t) {
      R *= 1.7;
      f = lead(R);
      if (f > 0.0) {
        Rhi = R;
        fhi = f;
        break;
      }
      Rlo = R;
      flo = f;
      if (R > 1e8) break;
    }
  }
  if (Rlo <= 0.0 || Rhi <= 0.0)
    throw std::runtime_error("oracle seeding: no neutral R bracket in [1e-2, 1e8]");

  for (int t = 0; t < 20 && (Rhi - Rlo) > 0.04 * Rhi; ++t) {
    double Rm = Rlo + (Rhi - Rlo) * std::clamp(-flo / (fhi - flo), 0.1, 0.9);
    double fm = lead(Rm);
    if (fm > 0.0) {
      Rhi = Rm;
      fhi = fm;
    } else {
      Rlo = Rm;
      flo = fm;
    }
  }
  R = 0.5 * (Rlo + Rhi);

  OracleModes modes = oracle_solve(R, k, 4, /*with_vectors=*/true);
  if (modes.sigma.empty()) throw std::runtime_error("oracle seeding: empty spectrum");
  Complex sig = modes.sigma[0];
  Eigen::VectorXcd v = modes.vectors.col(0);
  if (sig.imag() < 0.0) {
    // use the positive member of the conjugate pair
    sig = std::conj(sig);
    v = v.conjugate();
  }
  Complex alpha = v(kTh1);
  if (std::abs(alpha) < 1e-10 * sup_abs_vec(v))
    throw std::runtime_error("oracle seeding: mode has DTheta(0) ~ 0, normalization singular");
  v /= alpha;

  EigenSolution init = interp_seed(v, p_.oracle_n_z, z_nodes_);
  init.k = k;
  init.R = R;
  bool osc = std::abs(sig.imag()) > 1e-3;
  init.sigma = osc ? Complex(0.0, sig.imag()) : Complex(0.0, 0.0);
  init.branch = osc ? BranchClass::oscillatory : BranchClass::stationary;
  return init;
}

// ---------------------------------------------------------------------------

EigenSolution StabilitySolver::solve_neutral_point(double k, const EigenSolution* init) {
  if (!(k > 0.0) || !std::isfinite(k)) throw std::invalid_argument("k must be positive");
  EigenSolution seed;
  if (init == nullptr) {
    seed = oracle_seed(k);
  } else {
    seed = *init;
    seed.k = k;
  }
  bool stationary = seed.branch == BranchClass::stationary;
  return newton(k, seed, /*neutral=*/true, stationary, 0.0);
}

EigenSolution StabilitySolver::solve_growth_rate(double k, double R, const EigenSolution* init) {
  if (!(k > 0.0) || !std::isfinite(k)) throw std::invalid_argument("k must be positive");
  EigenSolution seed;
  if (init == nullptr) {
    OracleModes modes = oracle_solve(R, k, 1, /*with_vectors=*/true);
    if (modes.sigma.empty()) throw std::runtime_error("growth seeding: empty spectrum");
    Eigen::VectorXcd v = modes.vectors.col(0);
    Complex alpha = v(kTh1);
    if (std::abs(alpha) < 1e-10 * sup_abs_vec(v))
      throw std::runtime_error("growth seeding: normalization singular");
    v /= alpha;
    seed = interp_seed(v, p_.oracle_n_z, z_nodes_);
    seed.k = k;
    seed.R = R;
    seed.sigma = modes.sigma[0];
  } else {
    seed = *init;
    seed.k = k;
  }
  return newton(k, seed, /*neutral=*/false, /*stationary=*/false, R);
}

OperatorResiduals StabilitySolver::apply_operator(const EigenSolution& sol) {
  if (int(sol.W.size()) != n_ || int(sol.dTheta.size()) != n_)
    throw std::invalid_argument("apply_operator: profiles do not match n_z");
  ensure_wavenumber(sol.k);

  Eigen::VectorXcd y(7 * n_);
  const ComplexProfile* src[7] = {&sol.W,     &sol.dW,     &sol.d2W, &sol.d3W,
                                  &sol.Theta, &sol.dTheta, &sol.d2Theta};
  for (int c = 0; c < 7; ++c)
    for (int i = 0; i < n_; ++i) y(7 * i + c) = (*src[c])[i];

  ComplexProfile phi(n_);
  for (int i = 0; i < n_; ++i) phi[i] = y(7 * i + kTh1);
  PerturbedRadiation pr = ps_.solve(phi);
  GammaCoefficients gam = ps_.gammas(pr);

  Work w;
  w.k = sol.k;
  w.k2 = sol.k * sol.k;
  w.R = sol.R;
  w.sigma = sol.sigma;
  auto join = [&](const ComplexProfile& nodal, const ComplexProfile& mid, ComplexProfile& out) {
    out.resize(H_);
    for (int i = 0; i < n_; ++i) out[2 * i] = nodal[i];
    for (int i = 0; i < n_ - 1; ++i) out[2 * i + 1] = mid[i];
  };
  join(gam.gamma0, gam.gamma0_mid, w.g0x);
  join(gam.gamma1, gam.gamma1_mid, w.g1x);
  join(gam.gamma2, gam.gamma2_mid, w.g2x);
  w.g1d_wall[0] = pr.g1_d.front();
  w.g1d_wall[1] = pr.g1_d.back();

  w.assemble(y, n_, h_, p_.S_c, vcts_, dns_, snk_, beam_, p_.bc_mode, false,
             Work::ParamPair::R_only);

  OperatorResiduals res;
  res.momentum.resize(n_ - 1);
  res.concentration.resize(n_ - 1);
  res.chain.resize(n_ - 1);
  for (int c = 0; c < n_ - 1; ++c) {
    int row = 3 + 7 * c;
    res.momentum[c] = w.F(row + kW3) / h_;
    res.concentration[c] = w.F(row + kTh2) / h_;
    Complex worst(0.0, 0.0);
    for (int r : {kW, kW1, kW2, kTh, kTh1})
      if (std::abs(w.F(row + r)) > std::abs(worst)) worst = w.F(row + r);
    res.chain[c] = worst / h_;
  }
  int rb = 3 + 7 * (n_ - 1);
  res.boundary = {w.F(0), w.F(1), w.F(2), w.F(rb), w.F(rb + 1), w.F(rb + 2), w.F(rb + 3)};
  res.residual_norm = w.residual_norm;
  return res;
}

// ---------------------------------------------------------------------------

std::vector<NeutralBranch> StabilitySolver::trace_neutral_curve() {
  if (!(p_.k_min > 0.0) || !(p_.k_max > p_.k_min) || p_.k_steps < 4)
    throw std::invalid_argument("bad k range");
  int nk = p_.k_steps;
  std::vector<double> ks(nk);
  double ratio = std::pow(p_.k_max / p_.k_min, 1.0 / (nk - 1));
  for (int i = 0; i < nk; ++i) ks[i] = p_.k_min * std::pow(ratio, i);

  int ia = 0;
  for (int i = 1; i < nk; ++i)
    if (std::abs(std::log(ks[i] / 3.0)) < std::abs(std::log(ks[ia] / 3.0))) ia = i;

  NeutralBranch stat;
  stat.branch_class = BranchClass::stationary;
  NeutralBranch osc;
  osc.branch_class = BranchClass::oscillatory;
  std::vector<EigenSolution> stat_sols, osc_sols;
  const double s_floor = 1e-2;

  // Move a warm solution to a target wavenumber, geometrically halving the
  // step on Newton failures; returns converged=false if progress stalls.
  auto advance = [&](const EigenSolution& warm, double target) {
    EigenSolution sol = warm;
    double kcur = warm.k;
    int guard = 0;
    while (std::abs(std::log(target / kcur)) > 1e-12 && guard < 64) {
      ++guard;
      double ktry = target;
      EigenSolution attempt = solve_neutral_point(ktry, &sol);
      int halve = 0;
      while (!attempt.converged && halve < 6) {
        ++halve;
        double knext = std::sqrt(kcur * ktry);
        if (std::abs(std::log(knext / kcur)) < 1e-3) break;
        ktry = knext;
        attempt = solve_neutral_point(ktry, &sol);
      }
      if (!attempt.converged) {
        sol.converged = false;
        return sol;
      }
      sol = attempt;
      kcur = ktry;
    }
    sol.converged = sol.converged && std::abs(std::log(target / kcur)) <= 1e-12;
    return sol;
  };

  auto march_stat = [&](EigenSolution warm, int i0, int dir) {
    int fails = 0;
    for (int i = i0; i >= 0 && i < nk && fails < 4; i += dir) {
      EigenSolution sol = advance(warm, ks[i]);
      if (!sol.converged) {
        stat.failed_k.push_back(ks[i]);
        ++fails;
        continue;
      }
      fails = 0;
      warm = sol;
      stat.points.push_back({sol.k, sol.R, 0.0});
      stat_sols.push_back(sol);
    }
  };

  // Find the wavenumber where the oscillation frequency collapses into the
  // stationary branch, between a live point and a dead target.
  auto refine_k0 = [&](EigenSolution live, double k_hi) {
    double klo = live.k, khi = k_hi;
    for (int t = 0; t < 12 && (khi - klo) > 1e-3 * khi; ++t) {
      double km = std::sqrt(klo * khi);
      EigenSolution trial = solve_neutral_point(km, &live);
      if (trial.converged && trial.sigma.imag() > s_floor) {
        klo = km;
        live = trial;
      } else {
        khi = km;
      }
    }
    return 0.5 * (klo + khi);
  };

  auto march_osc_down = [&](EigenSolution warm, int i0) {
    int fails = 0;
    for (int i = i0; i >= 0 && fails < 3; --i) {
      EigenSolution sol = advance(warm, ks[i]);
      if (!sol.converged) {
        osc.failed_k.push_back(ks[i]);
        ++fails;
        continue;
      }
      if (sol.sigma.imag() < s_floor) break;  // frequency lost: branch ends here
      fails = 0;
      warm = sol;
      osc.points.push_back({sol.k, sol.R, sol.sigma.imag()});
      osc_sols.push_back(sol);
    }
  };

  auto march_osc_up = [&](EigenSolution warm, int i0) {
    for (int i = i0; i < nk; ++i) {
      EigenSolution sol = advance(warm, ks[i]);
      if (sol.converged && sol.sigma.imag() > s_floor) {
        warm = sol;
        osc.points.push_back({sol.k, sol.R, sol.sigma.imag()});
        osc_sols.push_back(sol);
        continue;
      }
      // merged with the stationary branch (or Newton lost the defective
      // near-merge mode): bracket k0 between the last live point and here
      osc.k0 = refine_k0(warm, ks[i]);
      osc.has_k0 = true;
      return;
    }
    osc.has_k0 = false;  // still oscillatory at k_max
  };

  auto trace_oscillatory = [&](const EigenSolution& seed_sol) {
    osc.points.push_back({seed_sol.k, seed_sol.R, seed_sol.sigma.imag()});
    osc_sols.push_back(seed_sol);
    int below = 0;
    while (below < nk && ks[below] < seed_sol.k * (1.0 - 1e-12)) ++below;
    int above = below;
    while (above < nk && ks[above] <= seed_sol.k * (1.0 + 1e-12)) ++above;
    if (below - 1 >= 0) march_osc_down(seed_sol, below - 1);
    march_osc_up(seed_sol, above);
  };

  auto sort_branch = [](NeutralBranch& b, std::vector<EigenSolution>& s) {
    std::vector<int> ord(b.points.size());
    for (size_t i = 0; i < ord.size(); ++i) ord[i] = int(i);
    std::sort(ord.begin(), ord.end(),
              [&](int a, int c) { return b.points[a].k < b.points[c].k; });
    std::vector<NeutralPoint> np(ord.size());
    std::vector<EigenSolution> ns(ord.size());
    for (size_t i = 0; i < ord.size(); ++i) {
      np[i] = b.points[ord[i]];
      ns[i] = s[ord[i]];
    }
    b.points = std::move(np);
    s = std::move(ns);
  };

  EigenSolution anchor = solve_neutral_point(ks[ia]);
  if (!anchor.converged) throw std::runtime_error("trace_neutral_curve: anchor did not converge");

  if (anchor.branch == BranchClass::stationary) {
    stat.points.push_back({anchor.k, anchor.R, 0.0});
    stat_sols.push_back(anchor);
    march_stat(anchor, ia + 1, +1);
    march_stat(anchor, ia - 1, -1);
    sort_branch(stat, stat_sols);

    // probe along the stationary branch for a near-neutral complex mode
    for (double frac : {0.85, 0.72, 0.58}) {
      double kp = p_.k_min * std::pow(p_.k_max / p_.k_min, frac);
      int near = 0;
      for (size_t i = 1; i < stat.points.size(); ++i)
        if (std::abs(std::log(stat.points[i].k / kp)) <
            std::abs(std::log(stat.points[near].k / kp)))
          near = int(i);
      double kq = stat.points[near].k, Rq = stat.points[near].R;
      std::vector<Complex> spec = eigen_oracle(Rq, kq, 8);
      bool candidate = false;
      for (Complex s : spec)
        if (s.imag() > 0.1 && s.real() > -0.5) candidate = true;
      if (!candidate) continue;

      EigenSolution gr = solve_growth_rate(kq, Rq);
      if (!gr.converged || std::abs(gr.sigma.imag()) < 0.1) {
        // the leading mode was the (neutral) stationary one; seed the complex
        // mode directly from its oracle eigenvector
        OracleModes modes = oracle_solve(Rq, kq, 8, /*with_vectors=*/true);
        int cand = -1;
        for (size_t j = 0; j < modes.sigma.size(); ++j)
          if (modes.sigma[j].imag() > 0.1 && modes.sigma[j].real() > -0.5) {
            cand = int(j);
            break;
          }
        if (cand < 0) continue;
        Eigen::VectorXcd v = modes.vectors.col(cand);
        Complex alpha = v(kTh1);
        if (std::abs(alpha) < 1e-10 * sup_abs_vec(v)) continue;
        v /= alpha;
        EigenSolution seed = interp_seed(v, p_.oracle_n_z, z_nodes_);
        seed.k = kq;
        seed.R = Rq;
        seed.sigma = modes.sigma[cand];
        gr = solve_growth_rate(kq, Rq, &seed);
        if (!gr.converged || std::abs(gr.sigma.imag()) < 0.1) continue;
      }
      gr.branch = BranchClass::oscillatory;
      EigenSolution onp = solve_neutral_point(kq, &gr);
      if (!onp.converged || onp.sigma.imag() < s_floor) continue;
      trace_oscillatory(onp);
      break;
    }
  } else {
    // the leading neutral mode at the anchor is oscillatory: trace it first,
    // then restart the stationary branch above the merge point
    trace_oscillatory(anchor);
    double k_st = osc.has_k0 ? std::min(osc.k0 * 1.25, p_.k_max) : p_.k_max;
    EigenSolution st = solve_neutral_point(k_st);
    if (st.converged && st.branch == BranchClass::stationary) {
      int i0 = 0;
      for (int i = 1; i < nk; ++i)
        if (std::abs(std::log(ks[i] / k_st)) < std::abs(std::log(ks[i0] / k_st))) i0 = i;
      EigenSolution first = advance(st, ks[i0]);
      if (first.converged) {
        stat.points.push_back({first.k, first.R, 0.0});
        stat_sols.push_back(first);
        march_stat(first, i0 + 1, +1);
        march_stat(first, i0 - 1, -1);
        sort_branch(stat, stat_sols);
      }
    }
  }
  sort_branch(osc, osc_sols);

  std::vector<NeutralBranch> out;
  if (!stat.points.empty()) {
    stat.solutions = std::move(stat_sols);
    out.push_back(std::move(stat));
  }
  if (!osc.points.empty()) {
    osc.solutions = std::move(osc_sols);
    out.push_back(std::move(osc));
  }
  return out;
}

CriticalPoint StabilitySolver::find_critical(const std::vector<NeutralBranch>& branches) {
  CriticalPoint best;
  bool have = false;
  for (const auto& b : branches) {
    if (b.points.size() < 3) continue;
    int im = 0;
    for (size_t i = 1; i < b.points.size(); ++i)
      if (b.points[i].R < b.points[im].R) im = int(i);
    double klo = b.points[size_t(std::max(0, im - 1))].k;
    double khi = b.points[std::min(b.points.size() - 1, size_t(im + 1))].k;

    EigenSolution warm;
    bool have_warm = im < int(b.solutions.size());
    if (have_warm) warm = b.solutions[im];

    auto eval = [&](double k) {
      EigenSolution s = solve_neutral_point(k, have_warm ? &warm : nullptr);
      if (s.converged) {
        warm = s;
        have_warm = true;
      }
      return s;
    };

    // golden-section minimization of R(k) between the discrete neighbors
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = klo, bb = khi;
    double x1 = bb - gr * (bb - a), x2 = a + gr * (bb - a);
    EigenSolution s1 = eval(x1), s2 = eval(x2);
    double f1 = s1.converged ? s1.R : 1e300, f2 = s2.converged ? s2.R : 1e300;
    EigenSolution sbest = (f1 < f2) ? s1 : s2;
    double fbest = std::min(f1, f2);
    for (int t = 0; t < 24 && (bb - a) > 1e-4 * bb; ++t) {
      if (f1 < f2) {
        bb = x2;
        x2 = x1;
        f2 = f1;
        s2 = s1;
        x1 = bb - gr * (bb - a);
        s1 = eval(x1);
        f1 = s1.converged ? s1.R : 1e300;
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        s1 = s2;
        x2 = a + gr * (bb - a);
        s2 = eval(x2);
        f2 = s2.converged ? s2.R : 1e300;
      }
      if (std::min(f1, f2) < fbest) {
        fbest = std::min(f1, f2);
        sbest = (f1 < f2) ? s1 : s2;
      }
    }

    double k_c, R_c, ims;
    if (sbest.converged && sbest.R <= b.points[im].R) {
      k_c = sbest.k;
      R_c = sbest.R;
      ims = std::abs(sbest.sigma.imag());
    } else {
      k_c = b.points[im].k;
      R_c = b.points[im].R;
      ims = std::abs(b.points[im].im_sigma);
    }
    if (b.branch_class == BranchClass::stationary) ims = 0.0;

    if (!have || R_c < best.R_c) {
      best.k_c = k_c;
      best.R_c = R_c;
      best.lambda_c = 2.0 * kPi / k_c;
      best.im_sigma_c = ims;
      best.source_branch = b.branch_class;
      have = true;
    }
  }
  if (!have) throw std::invalid_argument("find_critical: no branch with at least 3 points");
  return best;
}

}  // namespace biocon
