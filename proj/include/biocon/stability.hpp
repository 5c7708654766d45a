#pragma once

// Linear stability of the equilibrium: neutral branches R(k), growth rates,
// and the critical point.
//
// The coupled system for the vertical velocity amplitude W and the
// integrated concentration amplitude Theta,
//
//   (sigma/S_c + k^2 - D^2)(D^2 - k^2) W = R k^2 DTheta,
//   D^3 Theta = gamma0 + gamma1 Theta + (sigma + k^2 + gamma2) DTheta
//               + V_c T_s D^2 Theta + (Dn_s) W,
//
// is written as a first-order system in (W, DW, D2W, D3W, Theta, DTheta,
// D2Theta) and discretized with fourth-order Hermite-Simpson cells.  Neutral
// points (Re sigma = 0) are found by a bordered Newton iteration whose extra
// unknowns are R (and Im sigma on oscillatory branches); the nonlocal
// radiation coefficient gamma0 and the wall value of the scattered response
// are re-evaluated every iteration but held fixed in the Jacobian.  A dense
// eigenvalue oracle built on an independent five-point finite-difference
// discretization (linear in sigma, with the radiation response assembled as
// dense matrix blocks, nothing frozen) cross-checks converged points.

#include <array>
#include <complex>
#include <memory>
#include <vector>

#include "biocon/perturbation.hpp"

namespace biocon {

/// Second velocity condition at the walls.  `paper_equations` matches the
/// equation set as printed (W = D2W = 0, stress-free); `rigid` replaces it
/// with W = DW = 0 (no slip), which the surrounding text asserts.  Both are
/// kept because published tables could have used either.
enum class BcMode { paper_equations, rigid };

enum class BranchClass { stationary, oscillatory };

struct StabilityParams {
  double S_c = 20.0;  // Schmidt number
  BcMode bc_mode = BcMode::paper_equations;
  int n_z = 201;             // collocation nodes on [0, 1]
  double newton_tol = 1e-9;  // relative residual stop (see residual_norm)
  double param_tol = 1e-8;   // relative stop on R / Im sigma increments
  int max_newton = 60;
  int oracle_n_z = 101;  // grid of the dense eigen oracle
  double k_min = 0.5, k_max = 8.0;
  int k_steps = 60;  // geometric k grid for curve tracing
  // Radiation solve controls; n_z inside is overridden by the grids above.
  // The inner tolerance sits well below newton_tol so the scattering
  // iteration never limits the outer convergence.
  PerturbationParams radiation{201, 24, 24, 1e-11, 400};
};

/// One converged (or best-effort) eigenproblem solution.  All profiles live
/// on the uniform z grid; dW..d3W and dTheta, d2Theta are the first-order
/// system components, not numerical derivatives.
struct EigenSolution {
  double k = 0.0;
  double R = 0.0;
  Complex sigma{0.0, 0.0};
  BranchClass branch = BranchClass::stationary;
  std::vector<double> z;
  ComplexProfile W, dW, d2W, d3W, Theta, dTheta, d2Theta;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Discrete residuals of the stability operator for given profiles, with the
/// radiation fields refreshed for the supplied Theta.  Cell entries are the
/// Hermite-Simpson integral residuals divided by the cell width, so they
/// approximate the pointwise equation residual at the cell center.
struct OperatorResiduals {
  ComplexProfile momentum;       // fourth-derivative (W) row, per cell
  ComplexProfile concentration;  // third-derivative (Theta) row, per cell
  ComplexProfile chain;          // worst first-order definition row, per cell
  std::array<Complex, 7> boundary;  // W, vel2, flux at z=0; same + Theta at z=1
  double residual_norm = 0.0;       // scaled sup norm, as used by Newton
};

struct NeutralPoint {
  double k = 0.0, R = 0.0, im_sigma = 0.0;
};

struct NeutralBranch {
  std::vector<NeutralPoint> points;       // ascending k
  std::vector<EigenSolution> solutions;   // parallel to points (warm-start data)
  BranchClass branch_class = BranchClass::stationary;
  double k0 = 0.0;    // oscillatory: wavenumber where Im sigma -> 0
  bool has_k0 = false;
  std::vector<double> failed_k;  // wavenumbers where continuation lost a point
};

struct CriticalPoint {
  double k_c = 0.0, R_c = 0.0, lambda_c = 0.0, im_sigma_c = 0.0;
  BranchClass source_branch = BranchClass::stationary;
};

class StabilitySolver {
 public:
  StabilitySolver(const BasicState& bs, const StabilityParams& params = {});

  const StabilityParams& params() const { return p_; }
  const BasicState& basic() const { return *bs_; }
  const std::vector<double>& z_nodes() const { return z_nodes_; }

  /// Neutral point at fixed k: Re sigma = 0 imposed, R adjusted (and
  /// Im sigma when the seed is oscillatory).  Without `init`, seeds itself
  /// from the eigen oracle: brackets R on the sign of the leading growth
  /// rate and takes the corresponding eigenvector.  A non-converged result
  /// carries the best iterate with converged = false.
  EigenSolution solve_neutral_point(double k, const EigenSolution* init = nullptr);

  /// Growth rate at fixed (k, R): complex sigma free, eigenfunction
  /// normalized by DTheta(0) = 1.
  EigenSolution solve_growth_rate(double k, double R, const EigenSolution* init = nullptr);

  /// Leading eigenvalues (sorted by descending real part) of the dense
  /// five-point discretization at fixed (R, k).
  std::vector<Complex> eigen_oracle(double R, double k, int n_modes = 8);

  /// Re-evaluate all discrete residuals for a solution candidate.
  OperatorResiduals apply_operator(const EigenSolution& sol);

  /// Trace the fundamental stationary branch over the geometric k grid and,
  /// when oracle probing finds a near-neutral complex mode, the oscillatory
  /// branch bifurcating from it (with its merge wavenumber k0).
  std::vector<NeutralBranch> trace_neutral_curve();

  /// Global minimum of R over the branch points, refined by golden-section
  /// neutral solves around the discrete minimizer.
  CriticalPoint find_critical(const std::vector<NeutralBranch>& branches);

 private:
  struct Work;  // per-iteration assembly scratch, defined in the source

  void ensure_wavenumber(double k);
  void ensure_dense_jacobian(double k);
  void ensure_oracle_wavenumber(double k);
  EigenSolution oracle_seed(double k);
  struct OracleModes {
    std::vector<Complex> sigma;
    Eigen::MatrixXcd vectors;  // oracle-grid state stacks, one column each
  };
  OracleModes oracle_solve(double R, double k, int n_modes, bool with_vectors);
  EigenSolution newton(double k, const EigenSolution& init, bool neutral, bool stationary,
                       double R_fixed);
  EigenSolution pack(double k, const Eigen::VectorXcd& y, double R, Complex sigma,
                     bool stationary) const;

  const BasicState* bs_;
  StabilityParams p_;

  int n_ = 0, H_ = 0;
  double h_ = 0.0;
  std::vector<double> z_nodes_;

  // half-grid samples (nodes and cell centers interleaved)
  std::vector<double> vcts_;  // V_c T_s
  std::vector<double> dns_;   // Dn_s
  // flux-condition wall factors: V_c n_s T'(G_s), and its beam part
  // V_c n_s T' kappa G_c / cos(theta_r), at z = 0 and z = 1
  double snk_[2] = {0.0, 0.0};
  double beam_[2] = {0.0, 0.0};

  PerturbationSolver ps_;      // collocation-grid radiation solver
  double ps_k_ = -1.0;
  // dense columns of the Jacobian from the radiation response (gamma0 and the
  // wall fluxes are linear maps of the nodal DTheta); column j multiplies
  // y(7 j + 5).  Rebuilt per wavenumber, applied by a Woodbury correction
  // around the banded factorization.
  Eigen::MatrixXcd Cd_;
  double cd_k_ = -1.0;
  std::unique_ptr<PerturbationSolver> ops_;  // oracle-grid radiation solver
  double ops_k_ = -1.0;
  // cached oracle pencil blocks at the current wavenumber:
  // K(sigma, R) = K0 + R * KR + sigma * K1
  Eigen::MatrixXcd oK0_, oKR_, oK1_;
  Eigen::MatrixXd oD_;  // oracle-grid nodal derivative matrix
};

}  // namespace biocon
