#include "doctest.h"

#include <cmath>
#include <limits>

#include "mingraph/domain.hpp"

using namespace mingraph;

TEST_SUITE("domain") {

TEST_CASE("unit disk classification matches the analytic disk") {
  const DomainSpec spec = DomainSpec::ball(2, 1.0);
  const Grid g = build_grid(spec, 0.1);

  // Inside nodes are exactly the lattice points with |x| < 1, and their
  // count is the area pi/h^2 up to a perimeter-order correction.
  int64_t inside = 0;
  for (int64_t f = 0; f < g.total_nodes(); ++f) {
    const Vec x = g.point(f);
    const bool in = x.norm() < 1.0;
    CHECK((g.cls[static_cast<size_t>(f)] != NodeClass::kExterior) == in);
    if (in) ++inside;
  }
  const double expected = 3.14159265358979 / (0.1 * 0.1);
  CHECK(std::fabs(static_cast<double>(inside) - expected) < 4.0 / 0.1);

  // Interior nodes have all axis neighbors inside (by construction, but
  // verify against the stored links).
  for (int64_t ii = 0; ii < g.inside_count(); ++ii) {
    if (g.cls[static_cast<size_t>(g.flat_of[static_cast<size_t>(ii)])] != NodeClass::kInterior) continue;
    for (int a = 0; a < g.n; ++a)
      for (int sd = 0; sd < 2; ++sd)
        CHECK(g.links[static_cast<size_t>(ii)][static_cast<size_t>(a)][static_cast<size_t>(sd)].neighbor >= 0);
  }
}

TEST_CASE("coarse spacing is rejected") {
  const DomainSpec spec = DomainSpec::ball(2, 1.0);
  CHECK_THROWS_WITH_AS(build_grid(spec, 2.0), doctest::Contains("diameter/8"), Error);
  CHECK_THROWS_AS(build_grid(spec, 0.25), Error);  // exactly l/8 still too coarse
}

TEST_CASE("sharp box is rejected, rounded box accepted") {
  CHECK_THROWS_AS(DomainSpec::rounded_box(2, {1.0, 1.0}, 0.0), Error);
  const DomainSpec spec = DomainSpec::rounded_box(2, {1.0, 1.0}, 0.25);
  CHECK(spec.convex());
  CHECK(spec.diameter() == doctest::Approx(2.0 * (0.75 * std::sqrt(2.0) + 0.25)));
  const Grid g = build_grid(spec, 0.1);
  CHECK(g.inside_count() > 0);
}

TEST_CASE("cut distances lie in (0, h] on the catenoid neck") {
  const DomainSpec spec = DomainSpec::catenoid_neck(3, 0.5, 1.0);
  const Grid g = build_grid(spec, 0.05);
  int64_t cuts = 0;
  for (int64_t ii = 0; ii < g.inside_count(); ++ii)
    for (int a = 0; a < g.n; ++a)
      for (int sd = 0; sd < 2; ++sd) {
        const auto& link = g.links[static_cast<size_t>(ii)][static_cast<size_t>(a)][static_cast<size_t>(sd)];
        if (link.neighbor >= 0) continue;
        ++cuts;
        CHECK(link.theta > 0.0);
        CHECK(link.theta <= 1.0);
        // The stored cut point sits on the boundary (grazing cuts are
        // clamped to theta = 1e-2, moving the cut point by up to h/100).
        if (link.theta > 0.011)
          CHECK(std::fabs(spec.level(g.cut_points[static_cast<size_t>(link.cut)])) < 1e-7);
      }
  CHECK(cuts > 0);
}

TEST_CASE("unit ball distance field is radial") {
  const DomainSpec spec = DomainSpec::ball(2, 1.0);
  const Grid g = build_grid(spec, 0.05);
  const DistanceField df = distance_field(spec, g, 0.2);
  for (int64_t ii = 0; ii < g.inside_count(); ++ii) {
    if (!df.in_band[static_cast<size_t>(ii)]) continue;
    const Vec x = g.point(g.flat_of[static_cast<size_t>(ii)]);
    CHECK(df.d[static_cast<size_t>(ii)] == doctest::Approx(1.0 - x.norm()).epsilon(1e-8).scale(1.0));
    // Dd is the inward radial direction.
    const double r = x.norm();
    if (r > 1e-12) {
      for (int i = 0; i < 2; ++i)
        CHECK(df.grad[static_cast<size_t>(ii)][i] == doctest::Approx(-x[i] / r).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("unit ball band hessian: tangential eigenvalue -1/|x| and the radial one vanishes") {
  const DomainSpec spec = DomainSpec::ball(2, 1.0);
  const Grid g = build_grid(spec, 0.02);
  const DistanceField df = distance_field(spec, g, 0.1);
  int checked = 0;
  for (int64_t ii = 0; ii < g.inside_count(); ++ii) {
    if (!df.in_band[static_cast<size_t>(ii)] || !df.hess_ok[static_cast<size_t>(ii)]) continue;
    const Vec x = g.point(g.flat_of[static_cast<size_t>(ii)]);
    const double r = x.norm();
    // Keep away from the band edge and from boundary-adjacent one-sided
    // stencils, where the difference quotients are first order.
    if (r < 0.9 + 2 * g.h || r > 1.0 - 2 * g.h) continue;
    const EigenSym es = jacobi_eigensym(df.hess[static_cast<size_t>(ii)]);
    CHECK(std::fabs(es.values[0]) < 5e-3);                 // radial eigenvalue vanishes
    CHECK(std::fabs(es.values[1] - (-1.0 / r)) < 2e-3);    // tangential eigenvalue
    // Radial second derivative along Dd vanishes.
    const Vec dd = df.grad[static_cast<size_t>(ii)];
    double quad = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) quad += df.hess[static_cast<size_t>(ii)](i, j) * dd[i] * dd[j];
    CHECK(std::fabs(quad) < 5e-3);
    ++checked;
  }
  CHECK(checked > 50);
}

TEST_CASE("unit ball n=3: lambda_-(d) over a 0.1 band is 1/0.9") {
  const DomainSpec spec = DomainSpec::ball(3, 1.0);
  const Grid g = build_grid(spec, 0.05);
  const DistanceField df = distance_field(spec, g, 0.1);
  const GeometrySummary s = geometry_summary(spec, g, df);
  // Independent oracle: Hess(1-|x|) has tangential eigenvalues -1/|x|, so
  // the band infimum of lambda_min is -1/0.9 and lambda_- = 1.1111...
  CHECK(s.lambda_minus == doctest::Approx(1.0 / 0.9).epsilon(0.03));
  CHECK(s.l == doctest::Approx(2.0));
  CHECK(s.convex);
  CHECK(std::isinf(s.r_omega));
  CHECK(s.mean_convex);
  CHECK(s.d0_regularity > 0.1);
}

TEST_CASE("mean convexity propagates inward: laplacian of d nonpositive on the band") {
  const DomainSpec spec = DomainSpec::ball(2, 1.0);
  const Grid g = build_grid(spec, 0.05);
  const DistanceField df = distance_field(spec, g, 0.15);
  for (int64_t ii = 0; ii < g.inside_count(); ++ii) {
    if (!df.in_band[static_cast<size_t>(ii)] || !df.hess_ok[static_cast<size_t>(ii)]) continue;
    CHECK(df.laplacian[static_cast<size_t>(ii)] <= 10.0 * g.h);
  }
}

TEST_CASE("catenoid neck: mean convex, not convex, zero mean curvature at the equator") {
  const DomainSpec spec = DomainSpec::catenoid_neck(3, 0.5, 1.0);
  const Grid g = build_grid(spec, 0.1);
  const DistanceField df = distance_field(spec, g, 0.15);
  const GeometrySummary s = geometry_summary(spec, g, df);
  CHECK_FALSE(s.convex);
  CHECK(s.mean_convex);
  CHECK(s.r_omega == doctest::Approx(0.5));
  // The sampled minimum of the boundary mean curvature sits at the exact
  // catenoid piece, where H vanishes identically.
  CHECK(std::fabs(s.min_boundary_H) < 5e-3);
  // Pole-to-pole diameter of the two joined caps.
  const auto geo = spec.neck_geometry();
  CHECK(s.l == doctest::Approx(2.0 * (geo.t_center + geo.cap_r)));
}

TEST_CASE("planar catenoid-neck is rejected") {
  CHECK_THROWS_AS(DomainSpec::catenoid_neck(2, 0.5, 1.0), Error);
}

TEST_CASE("geometry summary halving consistency on the ellipsoid") {
  const DomainSpec spec = DomainSpec::ellipsoid(2, {1.0, 0.6});
  const Grid g1 = build_grid(spec, 0.05);
  const DistanceField d1 = distance_field(spec, g1, 0.1);
  const GeometrySummary s1 = geometry_summary(spec, g1, d1);
  const Grid g2 = build_grid(spec, 0.025);
  const DistanceField d2 = distance_field(spec, g2, 0.1);
  const GeometrySummary s2 = geometry_summary(spec, g2, d2);
  CHECK(s1.lambda_minus > 0.0);
  CHECK(s2.lambda_minus / s1.lambda_minus < 4.0);
  CHECK(s1.lambda_minus / s2.lambda_minus < 4.0);
  CHECK(s1.mean_convex);
}

}  // TEST_SUITE
