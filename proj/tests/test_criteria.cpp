#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "mingraph/criteria.hpp"
#include "mingraph/rng.hpp"

using namespace mingraph;

namespace {

// A hand-made geometry summary for the unit disk with the band curvature
// bound rounded to 1.1111, so the constants come out in closed form.
GeometrySummary disk_geometry() {
  GeometrySummary g;
  g.l = 2.0;
  g.r_omega = std::numeric_limits<double>::infinity();
  g.lambda_minus = 1.1111;
  g.d0_regularity = 1.0;
  g.min_boundary_H = 1.0;
  g.h = 1e-4;
  g.mean_convex = true;
  g.convex = true;
  return g;
}

BoundaryData disk_data(const std::vector<std::string>& exprs) {
  return boundary_from_exprs(DomainSpec::ball(2, 1.0), exprs);
}

}  // namespace

TEST_SUITE_BEGIN("criteria");

TEST_CASE("unit-disk band constants come out exactly") {
  const BoundaryData bd = disk_data({"", ""});
  const GeometrySummary geo = disk_geometry();
  const BandConstants c = kappa_nu_d0(bd, geo);
  CHECK(c.nu == 32.0);
  CHECK(c.kappa == 1.0);
  CHECK(c.d0 == 1.0 / 128.0);
  CHECK(c.psi_cap == 32.0);
  // Thresholds with the safety factor switched off.
  const MainConditionResult mc = check_main_condition(bd, geo, c, 1.0);
  CHECK(mc.eps2 == doctest::Approx(0.0025).epsilon(1e-14));
  const ContinuationConditionResult cc = check_continuation_condition(bd, geo, c, 1.0);
  CHECK(cc.delta2 == doctest::Approx(0.05).epsilon(1e-14));
}

TEST_CASE("constant large component keeps kappa at one") {
  // |Dphi|_0 = 0 makes the exponential factor trivial regardless of nu, l.
  const BoundaryData bd = disk_data({"x", "1.5"});
  GeometrySummary geo = disk_geometry();
  geo.l = 17.0;
  const BandConstants c = kappa_nu_d0(bd, geo);
  CHECK(c.kappa == 1.0);
}

TEST_CASE("nu scales with dimension: flat data in 3d gives 48") {
  const BoundaryData bd = boundary_from_exprs(DomainSpec::ball(3, 1.0), {""});
  GeometrySummary geo = disk_geometry();
  const BandConstants c = kappa_nu_d0(bd, geo);
  CHECK(c.nu == 48.0);
}

TEST_CASE("phi = 0 gives psi_cap = 2/(d0 nu)^2 exactly") {
  const BoundaryData bd = disk_data({"sin(x)*y", ""});
  GeometrySummary geo = disk_geometry();
  geo.lambda_minus = 3.7;
  const BandConstants c = kappa_nu_d0(bd, geo);
  CHECK(c.kappa == 1.0);
  CHECK(c.psi_cap == 2.0 / (c.d0 * c.nu * c.d0 * c.nu));
}

TEST_CASE("band narrower than four cells is rejected") {
  const BoundaryData bd = disk_data({""});
  GeometrySummary geo = disk_geometry();
  geo.h = 0.01;  // 4h = 0.04 > d0 = 1/128
  CHECK_THROWS_WITH_AS(kappa_nu_d0(bd, geo), doctest::Contains("cannot resolve"), Error);
  geo.h = 1e-4;
  geo.d0_regularity = 2e-4;  // regularity clamp can trigger it too
  CHECK_THROWS_AS(kappa_nu_d0(bd, geo), Error);
}

TEST_CASE("classical convex-domain smallness test") {
  const GeometrySummary geo = disk_geometry();
  SUBCASE("zero data passes") {
    const Verdict v = check_wang(disk_data({"", ""}), geo);
    CHECK(v.applicable);
    CHECK(v.holds);
    CHECK(v.lhs == 0.0);
  }
  SUBCASE("affine data with slope one half passes at sqrt(2)/2") {
    const Verdict v = check_wang(disk_data({"0.5*x"}), geo);
    CHECK(v.holds);
    CHECK(v.lhs == doctest::Approx(std::sqrt(2.0) * 0.5).epsilon(1e-8));
  }
  SUBCASE("affine data with unit slope fails") {
    const Verdict v = check_wang(disk_data({"x"}), geo);
    CHECK(v.applicable);
    CHECK_FALSE(v.holds);
  }
  SUBCASE("not applicable off convex domains") {
    GeometrySummary g2 = geo;
    g2.convex = false;
    const Verdict v = check_wang(disk_data({"x"}), g2);
    CHECK_FALSE(v.applicable);
  }
}

TEST_CASE("tunable convex condition with the det cap beta0") {
  const GeometrySummary geo = disk_geometry();
  SUBCASE("two affine unit-slope components pass at beta0 = 9") {
    const Verdict v = check_convex_condition(disk_data({"x", "y"}), geo, 9.0);
    CHECK(v.applicable);
    CHECK(v.holds);
    CHECK(v.lhs == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(v.rhs == doctest::Approx(std::sqrt(8.0)).epsilon(1e-14));
  }
  SUBCASE("three unit slopes exceed sqrt(8)") {
    const Verdict v = check_convex_condition(disk_data({"x", "y", "x"}), geo, 9.0);
    CHECK_FALSE(v.holds);
  }
  SUBCASE("beta0 outside (1, 9] is rejected") {
    CHECK_THROWS_AS(check_convex_condition(disk_data({""}), geo, 1.0), Error);
    CHECK_THROWS_AS(check_convex_condition(disk_data({""}), geo, 9.5), Error);
    CHECK_THROWS_AS(check_convex_condition(disk_data({""}), geo, -2.0), Error);
  }
  SUBCASE("not applicable off convex domains") {
    GeometrySummary g2 = geo;
    g2.convex = false;
    CHECK_FALSE(check_convex_condition(disk_data({""}), g2, 4.0).applicable);
  }
}

TEST_CASE("mean-convex smallness condition on the small components") {
  const GeometrySummary geo = disk_geometry();
  SUBCASE("zero small component passes trivially") {
    const BoundaryData bd = disk_data({"", "0.01*x"});
    const BandConstants c = kappa_nu_d0(bd, geo);
    const MainConditionResult r = check_main_condition(bd, geo, c, 1.0);
    CHECK(r.verdict.applicable);
    CHECK(r.verdict.holds);
    CHECK(r.verdict.lhs == 0.0);
  }
  SUBCASE("slope 0.06 on the unit-disk constants fails at 0.0036 > 0.0025") {
    const BoundaryData bd = disk_data({"0.06*x", ""});
    const BandConstants c = kappa_nu_d0(bd, geo);
    const MainConditionResult r = check_main_condition(bd, geo, c, 1.0);
    CHECK(r.verdict.lhs == doctest::Approx(0.0036).epsilon(1e-8));
    CHECK(r.verdict.rhs == doctest::Approx(0.0025).epsilon(1e-14));
    CHECK_FALSE(r.verdict.holds);
  }
  SUBCASE("slope 0.04 passes at 0.0016 <= 0.0025") {
    const BoundaryData bd = disk_data({"0.04*x", ""});
    const BandConstants c = kappa_nu_d0(bd, geo);
    CHECK(check_main_condition(bd, geo, c, 1.0).verdict.holds);
  }
  SUBCASE("one component reports the mean-convexity verdict instead") {
    const BoundaryData bd = disk_data({"x"});
    const BandConstants c{};  // never consulted for one component
    const MainConditionResult r = check_main_condition(bd, geo, c, 1.0);
    CHECK_FALSE(r.verdict.applicable);
    CHECK(r.verdict.holds);  // disk is mean convex
    GeometrySummary g2 = geo;
    g2.mean_convex = false;
    CHECK_FALSE(check_main_condition(bd, g2, c, 1.0).verdict.holds);
  }
  SUBCASE("safety shrinks both thresholds linearly") {
    const BoundaryData bd = disk_data({"0.03*x", ""});
    const BandConstants c = kappa_nu_d0(bd, geo);
    const MainConditionResult a = check_main_condition(bd, geo, c, 1.0);
    const MainConditionResult b = check_main_condition(bd, geo, c, 0.5);
    CHECK(b.eps2 == doctest::Approx(0.5 * a.eps2).epsilon(1e-14));
    CHECK(b.eps1 <= a.eps1);
  }
}

TEST_CASE("continuity-method condition for two components") {
  const GeometrySummary geo = disk_geometry();
  SUBCASE("zero data passes") {
    const BoundaryData bd = disk_data({"", ""});
    const BandConstants c = kappa_nu_d0(bd, geo);
    const ContinuationConditionResult r = check_continuation_condition(bd, geo, c, 1.0);
    CHECK(r.verdict.applicable);
    CHECK(r.verdict.holds);
    CHECK(r.delta2 == doctest::Approx(0.05).epsilon(1e-14));
  }
  SUBCASE("affine slope 0.04 passes, slope 0.06 fails") {
    const BoundaryData lo = disk_data({"0.04*x", ""});
    const BoundaryData hi = disk_data({"0.06*x", ""});
    const BandConstants c = kappa_nu_d0(lo, geo);
    CHECK(check_continuation_condition(lo, geo, c, 1.0).verdict.holds);
    CHECK_FALSE(check_continuation_condition(hi, geo, c, 1.0).verdict.holds);
  }
  SUBCASE("only two components qualify") {
    const BoundaryData one = disk_data({"0.003*x"});
    const BoundaryData three = disk_data({"x", "y", ""});
    const BandConstants c = kappa_nu_d0(one, geo);
    CHECK_FALSE(check_continuation_condition(one, geo, c, 1.0).verdict.applicable);
    CHECK_FALSE(check_continuation_condition(three, geo, c, 1.0).verdict.applicable);
  }
}

TEST_CASE("enlarging the data never flips a verdict from false to true") {
  const GeometrySummary geo = disk_geometry();
  Rng rng(20240817);
  // Random quadratic two-component data, scaled up through a ladder of
  // factors; each condition must be monotone non-increasing along it.
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<std::string> exprs;
    for (int a = 0; a < 2; ++a) {
      auto coef = [&] { return std::to_string(rng.uniform(-0.2, 0.2)); };
      exprs.push_back("(" + coef() + ")*x + (" + coef() + ")*y + (" + coef() + ")*x*x + (" +
                      coef() + ")*x*y + (" + coef() + ")*y*y");
    }
    const BoundaryData base = boundary_from_exprs(DomainSpec::ball(2, 1.0), exprs);
    struct Flags {
      bool wang, convex, main, cont;
    };
    auto eval = [&](double t) -> Flags {
      const BoundaryData bd = base.scaled(t);
      Flags f{false, false, false, false};
      f.wang = check_wang(bd, geo).holds;
      f.convex = check_convex_condition(bd, geo, 4.0).holds;
      try {
        const BandConstants c = kappa_nu_d0(bd, geo);
        f.main = check_main_condition(bd, geo, c, 1.0).verdict.holds;
        f.cont = check_continuation_condition(bd, geo, c, 1.0).verdict.holds;
      } catch (const Error&) {
        // a band too narrow to resolve counts as a failed condition
      }
      return f;
    };
    Flags prev = eval(0.5);
    for (double t : {1.0, 2.0, 4.0, 8.0}) {
      const Flags cur = eval(t);
      CHECK_FALSE((!prev.wang && cur.wang));
      CHECK_FALSE((!prev.convex && cur.convex));
      CHECK_FALSE((!prev.main && cur.main));
      CHECK_FALSE((!prev.cont && cur.cont));
      prev = cur;
    }
  }
}

TEST_CASE("cached sup-norms survive sampling refinement") {
  const DomainSpec spec = DomainSpec::ball(2, 1.0);
  const BoundaryData bd = boundary_from_exprs(spec, {"sin(2*x)*cos(y)", "x*y*y"});
  for (int a = 0; a < 2; ++a) {
    const double finer = bd.resample_sup_grad(a, spec.diameter() / 128.0);
    CHECK(finer <= bd.sup_grad(a) * (1.0 + 1e-6) + 1e-6);
  }
}

TEST_CASE("combined report carries every verdict and threshold") {
  const GeometrySummary geo = disk_geometry();
  const BoundaryData bd = disk_data({"0.01*x", ""});
  const ConditionReport rep = condition_report(bd, geo, 4.0, 0.5);
  CHECK(rep.band.nu == 32.0);
  CHECK(rep.beta0 == 4.0);
  CHECK(rep.safety == 0.5);
  CHECK(rep.wang.applicable);
  CHECK(rep.convex_condition.applicable);
  CHECK(rep.main_condition.applicable);
  CHECK(rep.continuation_condition.applicable);
  CHECK(rep.eps2 == doctest::Approx(0.5 * 0.0025).epsilon(1e-14));
  CHECK(rep.delta2 == doctest::Approx(0.5 * 0.05).epsilon(1e-14));
}

TEST_SUITE_END();
