#pragma once

// Solvability conditions for the Dirichlet problem of the minimal surface
// system: the band constants (nu, kappa, d0, Psi) derived from the
// distinguished boundary component, and the four smallness tests that
// decide which solver pipelines are entitled to run.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mingraph/boundary.hpp"
#include "mingraph/domain.hpp"
#include "mingraph/errors.hpp"

namespace mingraph {

struct BandConstants {
  double nu = 0.0;     // 16 n (lambda_plus(phi) + 1)
  double kappa = 1.0;  // exp(nu |Dphi|_0 l) >= 1
  double d0 = 0.0;     // boundary-band width, clamped by distance regularity
  double psi_cap = 0.0;  // Psi = 2 kappa^2 / (d0 nu)^2, the gradient-function cap
};

// One smallness test: lhs compared against rhs, with the slack and the
// constants that produced it.
struct Verdict {
  bool applicable = false;
  bool holds = false;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // rhs - lhs
  std::string note;     // why not applicable, or provenance caveats
};

struct ConditionReport {
  BandConstants band;
  Verdict wang;
  Verdict convex_condition;
  Verdict main_condition;
  Verdict continuation_condition;
  double beta0 = 0.0;
  double safety = 0.0;
  double eps1 = 0.0, eps2 = 0.0;    // main-condition thresholds actually used
  double delta1 = 0.0, delta2 = 0.0;  // continuation thresholds actually used
};

inline BandConstants kappa_nu_d0(const BoundaryData& bd, const GeometrySummary& geo) {
  BandConstants c;
  const int n = bd.n();
  c.nu = 16.0 * n * (bd.lambda_plus_phi() + 1.0);
  c.kappa = std::exp(c.nu * bd.dphi0() * geo.l);
  const double inv_d0 = std::max(
      (64.0 * (1.0 + bd.dphi0()) * (1.0 + bd.dphi0()) * c.kappa * c.kappa + 8.0 * n) *
          geo.lambda_minus,
      2.0 * n * c.nu * (1.0 + bd.dphi0()));
  double d0 = inv_d0 > 0.0 ? 1.0 / inv_d0 : std::numeric_limits<double>::infinity();
  // The band formula presumes a twice-differentiable distance on the band;
  // clamp to the width where projections stayed clean.
  d0 = std::min(d0, geo.d0_regularity);
  if (!(d0 >= 4.0 * geo.h))
    throw Error("DegenerateBand",
                "boundary band d0 = " + std::to_string(d0) +
                    " is narrower than 4h = " + std::to_string(4.0 * geo.h) +
                    "; the grid cannot resolve it");
  c.d0 = d0;
  c.psi_cap = 2.0 * c.kappa * c.kappa / (d0 * d0 * c.nu * c.nu);
  return c;
}

// Classical smallness condition for convex domains: with the stacked
// Euclidean norms of the boundary data's derivative arrays,
//   8 n l sup|D^2 psi| + sqrt(2) sup|D psi| < 1.
inline Verdict check_wang(const BoundaryData& bd, const GeometrySummary& geo) {
  Verdict v;
  if (!geo.convex) {
    v.note = "domain is not convex";
    return v;
  }
  v.applicable = true;
  v.lhs = 8.0 * bd.n() * geo.l * bd.sup_hess_stacked() + std::sqrt(2.0) * bd.sup_grad_stacked();
  v.rhs = 1.0;
  v.margin = v.rhs - v.lhs;
  v.holds = v.lhs < v.rhs;
  return v;
}

// Convex-domain condition with the tunable cap 1 < beta0 <= 9 on det g:
//   sum_alpha ( e n l beta0 sup|D^2 psi^a| + sup|D psi^a| ) < sqrt(beta0 - 1).
inline Verdict check_convex_condition(const BoundaryData& bd, const GeometrySummary& geo,
                                      double beta0) {
  if (!(beta0 > 1.0 && beta0 <= 9.0))
    throw Error("BadBeta", "beta0 must lie in (1, 9], got " + std::to_string(beta0));
  Verdict v;
  if (!geo.convex) {
    v.note = "domain is not convex";
    return v;
  }
  v.applicable = true;
  double sum = 0.0;
  for (int a = 0; a < bd.m(); ++a)
    sum += std::exp(1.0) * bd.n() * geo.l * beta0 * bd.sup_hess(a) + bd.sup_grad(a);
  v.lhs = sum;
  v.rhs = std::sqrt(beta0 - 1.0);
  v.margin = v.rhs - v.lhs;
  v.holds = v.lhs < v.rhs;
  return v;
}

struct MainConditionResult {
  Verdict verdict;
  double eps1 = 0.0;
  double eps2 = 0.0;
};

// Mean-convex smallness condition for m >= 2: the first m-1 components
// must be small against thresholds built from the band constants,
//   sum_{a<m} ( (1/eps1) sup|D^2 psi^a| + sup|D psi^a| )^2 <= eps2.
// The thresholds carry a non-constructive curvature-estimate constant that
// the `safety` factor stands in for; it is reported, never hidden.
inline MainConditionResult check_main_condition(const BoundaryData& bd,
                                                const GeometrySummary& geo,
                                                const BandConstants& band,
                                                double safety = 0.5) {
  if (!(safety > 0.0 && safety <= 1.0))
    throw Error("BadSafety", "safety must lie in (0, 1], got " + std::to_string(safety));
  MainConditionResult r;
  Verdict& v = r.verdict;
  if (bd.m() < 2) {
    // One graph height over a mean-convex domain: solvability needs no
    // smallness at all, so report that verdict instead.
    v.applicable = false;
    v.holds = geo.mean_convex;
    v.note = "m = 1: mean convexity of the boundary alone decides solvability";
    return r;
  }
  if (!geo.mean_convex) {
    v.note = "domain is not mean convex";
    return r;
  }
  v.applicable = true;
  const int n = bd.n();
  const int m = bd.m();
  const double ratio = band.d0 * band.nu / (5.0 * band.kappa);
  double eps2 = ratio * ratio / (m - 1);
  double eps1 = band.psi_cap / (n * geo.l);
  if (std::isfinite(geo.r_omega))
    eps1 *= std::exp(1.0 + n * geo.l / (band.psi_cap * geo.r_omega));
  else
    eps1 *= std::exp(1.0);
  eps1 = std::min(1.0, eps1);
  eps1 *= safety;
  eps2 *= safety;
  r.eps1 = eps1;
  r.eps2 = eps2;
  double lhs = 0.0;
  for (int a = 0; a < m - 1; ++a) {
    const double t = bd.sup_hess(a) / eps1 + bd.sup_grad(a);
    lhs += t * t;
  }
  v.lhs = lhs;
  v.rhs = eps2;
  v.margin = v.rhs - v.lhs;
  v.holds = v.lhs <= v.rhs;
  v.note = "thresholds scaled by safety factor standing in for a non-constructive constant";
  return r;
}

struct ContinuationConditionResult {
  Verdict verdict;
  double delta1 = 0.0;
  double delta2 = 0.0;
};

// Continuity-method condition, two components only:
//   (1/delta1) sup|D^2 psi| + sup|D psi| <= delta2,  delta2 = d0 nu / (5 kappa),
// with the stacked norms over both components.
inline ContinuationConditionResult check_continuation_condition(const BoundaryData& bd,
                                                                const GeometrySummary& geo,
                                                                const BandConstants& band,
                                                                double safety = 0.5) {
  if (!(safety > 0.0 && safety <= 1.0))
    throw Error("BadSafety", "safety must lie in (0, 1], got " + std::to_string(safety));
  ContinuationConditionResult r;
  Verdict& v = r.verdict;
  if (bd.m() != 2) {
    v.note = "continuity method is formulated for exactly two components";
    return r;
  }
  if (!geo.mean_convex) {
    v.note = "domain is not mean convex";
    return r;
  }
  v.applicable = true;
  const int n = bd.n();
  double delta2 = band.d0 * band.nu / (5.0 * band.kappa);
  double delta1 = band.psi_cap / (n * geo.l);
  if (std::isfinite(geo.r_omega))
    delta1 *= std::exp(1.0 + n * geo.l / (band.psi_cap * geo.r_omega));
  else
    delta1 *= std::exp(1.0);
  delta1 = std::min(1.0, delta1);
  delta1 *= safety;
  delta2 *= safety;
  r.delta1 = delta1;
  r.delta2 = delta2;
  v.lhs = bd.sup_hess_stacked() / delta1 + bd.sup_grad_stacked();
  v.rhs = delta2;
  v.margin = v.rhs - v.lhs;
  v.holds = v.lhs <= v.rhs;
  v.note = "thresholds scaled by safety factor standing in for a non-constructive constant";
  return r;
}

// Everything at once, for the CLI report.
inline ConditionReport condition_report(const BoundaryData& bd, const GeometrySummary& geo,
                                        double beta0 = 4.0, double safety = 0.5) {
  ConditionReport rep;
  rep.band = kappa_nu_d0(bd, geo);
  rep.beta0 = beta0;
  rep.safety = safety;
  rep.wang = check_wang(bd, geo);
  rep.convex_condition = check_convex_condition(bd, geo, beta0);
  const MainConditionResult mc = check_main_condition(bd, geo, rep.band, safety);
  rep.main_condition = mc.verdict;
  rep.eps1 = mc.eps1;
  rep.eps2 = mc.eps2;
  const ContinuationConditionResult cc = check_continuation_condition(bd, geo, rep.band, safety);
  rep.continuation_condition = cc.verdict;
  rep.delta1 = cc.delta1;
  rep.delta2 = cc.delta2;
  return rep;
}

}  // namespace mingraph
