#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <tuple>
#include <vector>

#include "biocon/basic_state.hpp"
#include "oracles.hpp"

using biocon::BasicState;
using biocon::BasicStateParams;
using biocon::TaxisVariant;
using biocon::ThetaRMode;

namespace {

BasicStateParams make_params(double V_c, double kappa, double omega, double I_D, double theta_deg,
                             TaxisVariant v = TaxisVariant::A, bool snell = false) {
  BasicStateParams p;
  p.V_c = V_c;
  p.radiation.kappa = kappa;
  p.radiation.omega = omega;
  p.radiation.I_D = I_D;
  p.radiation.theta_i_deg = theta_deg;
  p.taxis_variant = v;
  if (snell) p.radiation.theta_r_mode = ThetaRMode::snell_water;
  return p;
}

// Sign changes of dn/dz across the interior: 0 means a single boundary peak,
// 2 means a rising-falling-rising (bimodal) profile.
int gradient_sign_changes(const BasicState& s) {
  int changes = 0;
  double prev = s.dn(1.0 / 2000.0);
  for (int i = 2; i < 2000; ++i) {
    const double cur = s.dn(i / 2000.0);
    if ((cur > 0.0) != (prev > 0.0)) ++changes;
    prev = cur;
  }
  return changes;
}

}  // namespace

TEST_CASE("zero swimming speed gives the uniform suspension") {
  auto p = make_params(0.0, 0.5, 0.4, 0.26, 40.0);
  BasicState s(p);
  for (double z : {0.0, 0.2, 0.5, 0.8, 1.0}) {
    CHECK(s.n(z) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(s.tau(z) == doctest::Approx(p.radiation.kappa * (1.0 - z)).scale(1.0).epsilon(1e-10));
  }
  CHECK(s.eta() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(s.max_concentration().flat);
  CHECK(s.z_max() == 0.0);
  CHECK(s.sublayer_locations(10.0).empty());
}

TEST_CASE("equilibrium satisfies mass, optical depth, and the swimming ODE") {
  for (auto [vc, kappa, omega, id, th] :
       {std::tuple{15.0, 0.5, 0.4, 0.26, 0.0}, std::tuple{15.0, 0.5, 0.4, 0.26, 40.0},
        std::tuple{15.0, 0.5, 0.4, 0.26, 80.0}, std::tuple{15.0, 1.0, 0.4, 0.5, 20.0},
        std::tuple{15.0, 1.0, 0.4, 0.5, 60.0}, std::tuple{20.0, 1.0, 0.4, 0.5, 80.0},
        std::tuple{10.0, 1.0, 1.0, 0.02, 0.0}, std::tuple{10.0, 1.0, 1.0, 0.02, 50.0}}) {
    auto v = (omega == 1.0) ? TaxisVariant::B : TaxisVariant::A;
    BasicState s(make_params(vc, kappa, omega, id, th, v));
    CAPTURE(vc);
    CAPTURE(kappa);
    CAPTURE(th);
    CHECK(s.mass() == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(s.tau(0.0) == doctest::Approx(kappa).epsilon(1e-9));
    CHECK(s.tau(1.0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(s.ode_residual() < 1e-6);
    for (double z : {0.0, 0.1, 0.5, 0.9, 1.0}) CHECK(s.n(z) > 0.0);
  }
}

TEST_CASE("profiles converge under grid doubling") {
  for (auto [vc, th, snell] : {std::tuple{15.0, 60.0, true}, std::tuple{20.0, 80.0, false}}) {
    auto p = make_params(vc, 1.0, 0.4, 0.5, th, TaxisVariant::A, snell);
    BasicState coarse(p);
    auto p2 = p;
    p2.n_z = 2 * (p.n_z - 1) + 1;
    BasicState fine(p2);
    double sup = 0.0;
    for (int i = 0; i <= 200; ++i) {
      const double z = i / 200.0;
      sup = std::max(sup, std::abs(coarse.n(z) - fine.n(z)));
    }
    CAPTURE(vc);
    CAPTURE(th);
    CHECK(sup < 1e-6);
  }
}

TEST_CASE("derivative accessors are consistent with finite differences") {
  BasicState s(make_params(15.0, 1.0, 0.4, 0.5, 60.0));
  for (double z : {0.15, 0.4, 0.62, 0.85}) {
    const double dn_fd = oracle::deriv([&](double x) { return s.n(x); }, z, 1e-4);
    const double dG_fd = oracle::deriv([&](double x) { return s.G(x); }, z, 1e-4);
    const double dGd_fd = oracle::deriv([&](double x) { return s.G_d(x); }, z, 1e-4);
    CHECK(s.dn(z) == doctest::Approx(dn_fd).epsilon(1e-5).scale(1.0));
    CHECK(s.dG(z) == doctest::Approx(dG_fd).epsilon(1e-5).scale(1.0));
    CHECK(s.dG_d(z) == doctest::Approx(dGd_fd).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("peak location tracks the published profiles under water refraction") {
  // First family: kappa = 0.5, I_D = 0.26; published peaks 0.60/0.72/0.80.
  CHECK(BasicState(make_params(15.0, 0.5, 0.4, 0.26, 0.0, TaxisVariant::A, true)).z_max() ==
        doctest::Approx(0.52).epsilon(0.2));
  CHECK(BasicState(make_params(15.0, 0.5, 0.4, 0.26, 20.0, TaxisVariant::A, true)).z_max() ==
        doctest::Approx(0.60).epsilon(0.05));
  CHECK(BasicState(make_params(15.0, 0.5, 0.4, 0.26, 40.0, TaxisVariant::A, true)).z_max() ==
        doctest::Approx(0.72).epsilon(0.05));
  CHECK(BasicState(make_params(15.0, 0.5, 0.4, 0.26, 60.0, TaxisVariant::A, true)).z_max() ==
        doctest::Approx(0.80).epsilon(0.05));
  // Second family: kappa = 1, I_D = 0.5; published peaks 0.66/0.79/0.86.
  CHECK(BasicState(make_params(15.0, 1.0, 0.4, 0.5, 20.0, TaxisVariant::A, true)).z_max() ==
        doctest::Approx(0.66).epsilon(0.05));
  CHECK(BasicState(make_params(15.0, 1.0, 0.4, 0.5, 40.0, TaxisVariant::A, true)).z_max() ==
        doctest::Approx(0.79).epsilon(0.05));
  CHECK(BasicState(make_params(15.0, 1.0, 0.4, 0.5, 60.0, TaxisVariant::A, true)).z_max() ==
        doctest::Approx(0.86).epsilon(0.05));
}

TEST_CASE("mid-height accumulation for the moderate-scattering reference case") {
  BasicState s(make_params(10.0, 0.5, 0.4, 0.25, 0.0));
  // The uniform-profile intensity crosses critical at z = 0.52; the
  // converged equilibrium shades itself and peaks slightly above that.
  CHECK(s.z_max() > 0.45);
  CHECK(s.z_max() < 0.60);
  CHECK(gradient_sign_changes(s) == 1);  // unimodal interior peak
}

TEST_CASE("oblique incidence moves the peak weakly upward") {
  double prev = 0.0;
  for (double th : {0.0, 20.0, 40.0, 60.0, 80.0}) {
    BasicState s(make_params(15.0, 0.5, 0.4, 0.26, th, TaxisVariant::A, true));
    CHECK(s.z_max() >= prev - 1e-9);
    prev = s.z_max();
  }
}

TEST_CASE("purely scattering suspension: bimodal at normal incidence, unimodal oblique") {
  // Crossing depths of the critical intensity on the uniform profile.
  {
    BasicState uniform(make_params(0.0, 1.0, 1.0, 0.02, 0.0, TaxisVariant::B));
    const auto roots = uniform.sublayer_locations(uniform.taxis().critical_G());
    REQUIRE(roots.size() == 2);
    CHECK(roots[0] == doctest::Approx(0.64).epsilon(0.08));
    CHECK(roots[1] == doctest::Approx(0.96).epsilon(0.042));
  }
  // Equilibrium profile: rising-falling-rising (two concentration maxima).
  {
    BasicState s(make_params(10.0, 1.0, 1.0, 0.02, 0.0, TaxisVariant::B));
    CHECK(gradient_sign_changes(s) == 2);
    const auto roots = s.sublayer_locations(s.taxis().critical_G());
    CHECK(roots.size() == 2);
  }
  {
    BasicState s(make_params(10.0, 1.0, 1.0, 0.02, 50.0, TaxisVariant::B));
    CHECK(gradient_sign_changes(s) == 0);  // single peak at the lit face
    CHECK(s.z_max() == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("sublayer roots sit where the taxis response vanishes") {
  BasicState s(make_params(15.0, 0.5, 0.4, 0.26, 0.0));
  const auto roots = s.sublayer_locations(s.taxis().critical_G());
  REQUIRE(roots.size() >= 1);
  for (double r : roots) {
    CHECK(std::abs(s.T_s(r)) < 1e-6);
  }
}

TEST_CASE("concentration gradient changes sign exactly at the sublayer") {
  BasicState s(make_params(15.0, 0.5, 0.4, 0.26, 40.0));
  const auto roots = s.sublayer_locations(s.taxis().critical_G());
  REQUIRE(roots.size() == 1);
  const double r = roots[0];
  // Below the layer cells swim up (dn/dz > 0 approaching it), above they
  // swim down toward it, so n has its maximum there.
  CHECK(s.dn(r - 0.05) > 0.0);
  CHECK(s.dn(r + 0.05) < 0.0);
  CHECK(s.z_max() == doctest::Approx(r).epsilon(0.02));
}

TEST_CASE("parameter validation") {
  auto p = make_params(15.0, 0.5, 0.4, 0.26, 0.0);
  p.n_z = 21;
  CHECK_THROWS_AS(BasicState{p}, std::invalid_argument);
  p.n_z = 2001;
  p.V_c = -1.0;
  CHECK_THROWS_AS(BasicState{p}, std::invalid_argument);
}
