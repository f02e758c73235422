#include <cmath>

#include "doctest.h"
#include "mingraph/barriers.hpp"

using namespace mingraph;

namespace {

// Central-difference check of a barrier's derivative chain on the interior
// of its domain of definition.
void check_derivatives(const Barrier& b, double lo, double hi, double tol) {
  const double fd = (hi - lo) / 2000.0;
  for (int k = 1; k <= 8; ++k) {
    const double d = lo + (hi - lo) * k / 9.0;
    const double s_fd = (b.value(d + fd) - b.value(d - fd)) / (2.0 * fd);
    const double c_fd = (b.value(d + fd) - 2.0 * b.value(d) + b.value(d - fd)) / (fd * fd);
    CHECK(std::fabs(s_fd - b.slope(d)) < tol * (1.0 + std::fabs(b.slope(d))));
    CHECK(std::fabs(c_fd - b.curvature(d)) < tol * (1.0 + std::fabs(b.curvature(d))));
  }
}

}  // namespace

TEST_SUITE_BEGIN("barriers");

TEST_CASE("exterior-sphere boundary gradient bound") {
  const DomainSpec spec = DomainSpec::ball(2, 1.0);
  GeometrySummary geo;
  geo.l = 2.0;
  geo.r_omega = std::numeric_limits<double>::infinity();
  SUBCASE("affine data reduces to the gradient sup") {
    const BoundaryData bd = boundary_from_exprs(spec, {"0.3*x + 0.1*y"});
    const double b = exterior_sphere_bound(bd, geo, 2.0, 0);
    CHECK(b == doctest::Approx(bd.sup_grad(0)).epsilon(1e-10));
  }
  SUBCASE("quadratic data lands at 0.8 e plus the slope") {
    // sup|D^2 psi| = 0.1, n l v2_cap = 8, infinite exterior radius
    const BoundaryData bd = boundary_from_exprs(spec, {"0.05*x*x"});
    const double b = exterior_sphere_bound(bd, geo, 2.0, 0);
    CHECK(b == doctest::Approx(0.8 * std::exp(1.0) + 0.1).epsilon(1e-6));
  }
  SUBCASE("the Hessian term is linear in the data") {
    const BoundaryData one = boundary_from_exprs(spec, {"0.05*x*x"});
    const BoundaryData two = boundary_from_exprs(spec, {"0.1*x*x"});
    const double b1 = exterior_sphere_bound(one, geo, 2.0, 0) - one.sup_grad(0);
    const double b2 = exterior_sphere_bound(two, geo, 2.0, 0) - two.sup_grad(0);
    CHECK(b2 == doctest::Approx(2.0 * b1).epsilon(1e-6));
  }
  SUBCASE("a finite exterior radius feeds the exponent") {
    GeometrySummary g2 = geo;
    g2.r_omega = 4.0;  // n l v2_cap / r = 2
    const BoundaryData bd = boundary_from_exprs(spec, {"0.05*x*x"});
    const double b = exterior_sphere_bound(bd, g2, 2.0, 0);
    CHECK(b == doctest::Approx(0.8 * std::exp(3.0) + 0.1).epsilon(1e-6));
  }
}

TEST_CASE("log-distance barrier") {
  SUBCASE("unit-disk constants: slope 4 at the wall, concave increasing") {
    const Barrier b = log_distance_barrier(32.0, 1.0, 1.0 / 128.0);
    CHECK(b.value(0.0) == 0.0);
    CHECK(b.slope(0.0) == doctest::Approx(4.0).epsilon(1e-14));
    for (int k = 0; k <= 10; ++k) {
      const double d = (1.0 / 128.0) * k / 10.0;
      CHECK(b.slope(d) > 0.0);
      CHECK(b.curvature(d) < 0.0);
    }
    check_derivatives(b, 1e-4, 1.0 / 128.0 - 1e-4, 1e-5);
  }
  SUBCASE("kappa built from the data clears the ceiling") {
    const double nu = 20.0, dphi0 = 0.3, l = 1.7;
    const double kappa = std::exp(nu * dphi0 * l);
    const Barrier b = log_distance_barrier(nu, kappa, 0.01, dphi0 * l);
    // log(1 + kappa)/nu exceeds dphi0 l by log1p(1/kappa)/nu, nothing more
    CHECK(b.value(0.01) >= dphi0 * l);
    CHECK(b.value(0.01) - dphi0 * l ==
          doctest::Approx(std::log1p(1.0 / kappa) / nu).epsilon(1e-10));
  }
  SUBCASE("hand-assembled constants that cannot reach the ceiling are rejected") {
    CHECK_THROWS_AS(log_distance_barrier(32.0, 1.0, 0.01, 5.0), Error);
    CHECK_THROWS_AS(log_distance_barrier(0.5, 1.0, 0.01), Error);
  }
}

TEST_CASE("square-root neck barrier") {
  const Barrier b = sqrt_neck_barrier(1.0, 0.4);
  CHECK(b.pole_at_lo);
  CHECK(b.value(2.0 * 0.4) == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
  for (int k = 1; k <= 9; ++k) {
    const double d = 0.4 * k / 10.0;
    CHECK(b.slope(d) < 0.0);
    CHECK(b.curvature(d) > 0.0);
  }
  check_derivatives(b, 0.05, 0.39, 1e-5);
  CHECK_THROWS_AS(sqrt_neck_barrier(1.5, 0.4), Error);
  CHECK_THROWS_AS(sqrt_neck_barrier(1.0, -1.0), Error);
}

TEST_CASE("log-integral barrier and its quadrature") {
  SUBCASE("value at the outer radius is zero, slope is the integrand") {
    const Barrier b = log_integral_barrier(1.0, std::exp(1.0));
    CHECK(b.pole_at_lo);
    CHECK(b.value(std::exp(1.0)) == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
    check_derivatives(b, 1.3, std::exp(1.0) - 0.05, 1e-4);
  }
  SUBCASE("series cross-check of the full integral") {
    // integral_1^e (log t)^{-1/2} dt = sum_k 1/(k! (k + 1/2))
    double series = 0.0, fact = 1.0;
    for (int k = 0; k < 25; ++k) {
      if (k > 0) fact *= k;
      series += 1.0 / (fact * (k + 0.5));
    }
    CHECK(series == doctest::Approx(2.9253).epsilon(1e-4));
    const double quad = detail_barrier::log_inv_sqrt_integral(1.0, 1.0, std::exp(1.0));
    CHECK(quad == doctest::Approx(series).epsilon(1e-8));
  }
}

TEST_CASE("non-existence threshold") {
  SUBCASE("the first term at eps = 1 is 4") {
    const double t = nonexistence_threshold(1.0, 1.0, std::exp(1.0));
    const double integral = detail_barrier::log_inv_sqrt_integral(1.0, 1.0, std::exp(1.0));
    CHECK(t - integral == doctest::Approx(4.0).epsilon(1e-12));
  }
  SUBCASE("shrinking the window empties the integral term") {
    const double t = nonexistence_threshold(1.0, 2.0 - 1e-13, 2.0);
    CHECK(t == doctest::Approx(4.0).epsilon(1e-5));
  }
  SUBCASE("monotone decreasing in eps") {
    double prev = std::numeric_limits<double>::infinity();
    for (double eps = 0.1; eps <= 1.0 + 1e-12; eps += 0.1) {
      const double t = nonexistence_threshold(eps, 0.5, 3.0);
      CHECK(t < prev);
      prev = t;
    }
  }
  SUBCASE("domain errors") {
    CHECK_THROWS_AS(nonexistence_threshold(0.0, 0.5, 3.0), Error);
    CHECK_THROWS_AS(nonexistence_threshold(2.0, 0.5, 3.0), Error);
    CHECK_THROWS_AS(nonexistence_threshold(1.0, 3.0, 0.5), Error);
  }
}

TEST_CASE("elliptic action inequality holds on conditioned samples") {
  for (int n = 2; n <= 3; ++n)
    for (int m = 1; m <= 3; ++m) {
      const ActionBoundReport rep = elliptic_action_bound_check(n, m, 10000, 31u * n + m);
      CHECK(rep.violations == 0);
      CHECK(rep.invalid_samples == 0);
      CHECK(rep.min_slack >= -1e-9);
    }
}

TEST_CASE("elliptic action inequality is an equality at the degenerate sample") {
  // No auxiliary gradients, no perturbation, flat boundary: both sides
  // reduce to phi'' / det a.
  detail_barrier::ActionSample s;
  const int n = 3;
  s.dd = Vec(n);
  s.dd[0] = 1.0;
  s.hess_d = Mat(n, n);
  s.lam_minus = 0.0;
  s.phi1 = 1.7;
  s.phi2 = -0.9;
  s.dvphi = Vec(n);
  s.hvphi = Mat(n, n);
  const double slack = detail_barrier::action_slack(s, 1);
  CHECK(slack == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
}

TEST_CASE("neck non-existence data construction") {
  SUBCASE("a gentle neck admits a certified curvature constant") {
    const DomainSpec spec = DomainSpec::catenoid_neck(3, 3.0, 3.3);
    const NonexistenceData nd = make_nonexistence_data(spec, 1.0, 1.0, 0.04);
    CHECK(nd.a > 4.0 * 0.04);
    CHECK(nd.a < 0.5);
    CHECK(nd.threshold > 4.0);
    CHECK(nd.peak == doctest::Approx(nd.threshold + 1.0).epsilon(1e-12));
    CHECK(nd.conclusive);
    CHECK(nd.certificate.size() > 0);
    CHECK(nd.data.m() == 2);
    // the linear component has slope exactly eps
    CHECK(nd.data.sup_grad(0) == doctest::Approx(1.0).epsilon(1e-6));
    // the bump tops out at the peak on the waist
    CHECK(nd.data.value(1, nd.q) == doctest::Approx(nd.peak).epsilon(1e-12));
    Vec far(3);
    far[0] = 1.0;
    far[1] = -3.0;
    CHECK(nd.data.value(1, far) == 0.0);
  }
  SUBCASE("a sharp neck is refused") {
    const DomainSpec spec = DomainSpec::catenoid_neck(3, 0.5, 1.0);
    CHECK_THROWS_AS(make_nonexistence_data(spec, 1.0, 1.0, 0.04), Error);
  }
  SUBCASE("parameter validation") {
    const DomainSpec spec = DomainSpec::catenoid_neck(3, 3.0, 3.3);
    CHECK_THROWS_AS(make_nonexistence_data(spec, 0.0, 1.0, 0.04), Error);
    CHECK_THROWS_AS(make_nonexistence_data(DomainSpec::ball(3, 1.0), 1.0, 1.0, 0.04), Error);
  }
}

TEST_SUITE_END();
