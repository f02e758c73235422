#pragma once

// Explicit mean curvature flow of a graph with fixed Dirichlet data:
// f <- f + dt g^{ij} d_ij f at inside nodes, with the monitor quantities
// (volume density, theta, wedge product, residual, boundary-band gradient)
// recorded at every accepted step.  The analysis pass that produces the
// monitors also caches the update direction, so each step costs a single
// metric sweep.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mingraph/boundary.hpp"
#include "mingraph/errors.hpp"
#include "mingraph/field.hpp"
#include "mingraph/jetcalc.hpp"
#include "mingraph/parallel.hpp"

namespace mingraph {

struct FlowConfig {
  double sigma = 0.9;        // CFL fraction; dt = sigma h^2 / (2n)
  double tol = 1e-8;         // sup-residual convergence tolerance
  int64_t max_steps = 200000;
  double psi_cap = std::numeric_limits<double>::infinity();  // sup v^2 trip
  double beta0 = std::numeric_limits<double>::infinity();    // det g trip (convex mode)
  double blowup_threshold = 1e3;  // boundary-band gradient trip
  int monitor_every = 10;         // cadence of the maximum-principle verdicts
  double tol_mp = -1.0;           // monitor tolerance; < 0 means 5h
  double eps_margin = 0.05;       // wedge settles below 1 - eps_margin
  int threads = 0;
  int64_t checkpoint_every = 0;   // 0 disables
  std::function<void(const struct FlowState&)> checkpoint;
};

// One monitor row, describing a single state of the flow.
struct MonitorSample {
  double sup_v2 = 1.0;
  double min_theta_interior = 2.0;
  double min_theta_band = 2.0;       // boundary-adjacent nodes, this state
  double min_theta_parabolic = 2.0;  // running min: initial slice + band so far
  double max_wedge2 = 0.0;
  double sup_residual = 0.0;
  double band_grad = 0.0;  // largest singular value of Df on the band
};

struct FlowState {
  double t = 0.0;
  double dt = 0.0;  // last accepted step size
  VectorField f;
  std::vector<MonitorSample> monitors;  // one row per state: steps + 1

  // Cached analysis of f, filled by flow_analyze: the update direction
  // g^{ij} d_ij f^a (component-major) and the per-node step scale.
  std::vector<double> update;
  std::vector<double> rho;
};

enum class FlowOutcome { converged, max_steps, invariant_violated, blowup };

inline const char* to_string(FlowOutcome o) {
  switch (o) {
    case FlowOutcome::converged: return "converged";
    case FlowOutcome::max_steps: return "max_steps";
    case FlowOutcome::invariant_violated: return "invariant_violated";
    case FlowOutcome::blowup: return "blowup";
  }
  return "?";
}

struct MonitorVerdict {
  bool min_principle = true;  // interior theta stays above the parabolic min
  bool v2_monotone = true;    // sup v^2 non-increasing once wedge2 settles
  double worst_theta_gap = 0.0;  // max over steps of (parabolic min - interior min)
  double worst_v2_rise = 0.0;    // max single-step increase after settling
  int64_t settled_step = -1;     // first step with max wedge2 <= 1 - eps_margin
};

struct FlowResult {
  FlowOutcome outcome = FlowOutcome::max_steps;
  VectorField f;
  std::vector<MonitorSample> monitors;
  MonitorVerdict verdict;
  int64_t steps = 0;
  double wall_seconds = 0.0;
  std::string note;  // which trip fired, when applicable
};

namespace detail_flow {

// Ratio of the uniform-arms second-difference row sum to the actual one,
// per node, weighted by the metric diagonal.  Scaling dt by this ratio
// restores the uniform-grid CFL at cut nodes (where the Shortley-Weller
// arms h_m = theta h make the raw row sum as large as 1/(theta h^2), far
// beyond what dt = sigma h^2/(2n) tolerates) while leaving regular
// interior nodes stepping at exactly dt.
inline double step_scale(const Grid& g, const MetricState& ms, int64_t node) {
  double uniform = 0.0, actual = 0.0;
  for (int axis = 0; axis < g.n; ++axis) {
    const Grid::Link& lm = g.links[static_cast<size_t>(node)][static_cast<size_t>(axis)][0];
    const Grid::Link& lp = g.links[static_cast<size_t>(node)][static_cast<size_t>(axis)][1];
    const double hm = lm.neighbor >= 0 ? g.h : lm.theta * g.h;
    const double hp = lp.neighbor >= 0 ? g.h : lp.theta * g.h;
    uniform += ms.g_inv(axis, axis) / (g.h * g.h);
    actual += ms.g_inv(axis, axis) / (hm * hp);
  }
  return actual > uniform ? uniform / actual : 1.0;
}

}  // namespace detail_flow

// Recomputes the cached update direction, the step scales, and appends the
// monitor row for the current field.  Called once per accepted state.
inline void flow_analyze(const DiffOps& ops, FlowState& s, int threads = 0) {
  const Grid& grid = ops.grid();
  const int n = grid.n;
  const int m = s.f.m;
  const int64_t count = grid.inside_count();
  if (threads <= 0) threads = default_threads();

  s.update.assign(static_cast<size_t>(count * m), 0.0);
  s.rho.assign(static_cast<size_t>(count), 1.0);
  std::vector<double> theta(static_cast<size_t>(count));
  std::vector<double> v2(static_cast<size_t>(count));
  std::vector<double> wedge(static_cast<size_t>(count));
  std::vector<double> mu1(static_cast<size_t>(count));
  parallel_for(count, threads, [&](int64_t b, int64_t e) {
    std::vector<double> p(static_cast<size_t>(n));
    for (int64_t ii = b; ii < e; ++ii) {
      if (m == 1) {
        // Scalar graphs dominate the large-grid runs, and the metric has a
        // rank-one closed form there: g^{-1} = I - Du Du^T / v^2 with
        // v^2 = 1 + |Du|^2, so skip the generic SVD machinery per node.
        double vsq = 1.0;
        for (int i = 0; i < n; ++i) {
          p[static_cast<size_t>(i)] = ops.fast_first(i, ii, s.f, 0);
          vsq += p[static_cast<size_t>(i)] * p[static_cast<size_t>(i)];
        }
        const double m1sq = vsq - 1.0;
        theta[static_cast<size_t>(ii)] = 2.0 / vsq;
        v2[static_cast<size_t>(ii)] = vsq;
        wedge[static_cast<size_t>(ii)] = 0.0;
        mu1[static_cast<size_t>(ii)] = std::sqrt(std::max(0.0, m1sq));
        double acc = 0.0;
        double uniform = 0.0, actual = 0.0;
        for (int i = 0; i < n; ++i) {
          const double gii = 1.0 - p[static_cast<size_t>(i)] * p[static_cast<size_t>(i)] / vsq;
          acc += gii * ops.fast_diag(i, ii, s.f, 0);
          for (int j = i + 1; j < n; ++j)
            acc += 2.0 * (-p[static_cast<size_t>(i)] * p[static_cast<size_t>(j)] / vsq) *
                   ops.fast_mixed(i, j, ii, s.f, 0);
          const Grid::Link& lm = grid.links[static_cast<size_t>(ii)][static_cast<size_t>(i)][0];
          const Grid::Link& lp = grid.links[static_cast<size_t>(ii)][static_cast<size_t>(i)][1];
          const double hm = lm.neighbor >= 0 ? grid.h : lm.theta * grid.h;
          const double hp = lp.neighbor >= 0 ? grid.h : lp.theta * grid.h;
          uniform += gii / (grid.h * grid.h);
          actual += gii / (hm * hp);
        }
        s.rho[static_cast<size_t>(ii)] = actual > uniform ? uniform / actual : 1.0;
        s.update[static_cast<size_t>(ii)] = acc;
        continue;
      }
      if (m == 2) {
        // Rank-two analogue of the scalar shortcut: with U = Df (n x 2),
        // g^{-1} = I - U (I_2 + U^T U)^{-1} U^T and the singular values come
        // from the 2x2 gram of the columns, all in closed form.
        double px[8], py[8];
        double A = 0.0, B = 0.0, C = 0.0;
        for (int i = 0; i < n; ++i) {
          px[i] = ops.fast_first(i, ii, s.f, 0);
          py[i] = ops.fast_first(i, ii, s.f, 1);
          A += px[i] * px[i];
          B += px[i] * py[i];
          C += py[i] * py[i];
        }
        const double half = 0.5 * (A + C);
        const double disc = std::sqrt(std::max(0.0, 0.25 * (A - C) * (A - C) + B * B));
        const double l1 = half + disc;
        const double l2 = std::max(0.0, half - disc);
        const double vsq = (1.0 + l1) * (1.0 + l2);
        theta[static_cast<size_t>(ii)] = 2.0 * (1.0 - l1 * l2) / vsq;
        v2[static_cast<size_t>(ii)] = vsq;
        wedge[static_cast<size_t>(ii)] = std::sqrt(l1 * l2);
        mu1[static_cast<size_t>(ii)] = std::sqrt(l1);
        // q = U (I_2 + U^T U)^{-1} row by row; det(I_2 + U^T U) = v^2.
        double qx[8], qy[8], gd[8];
        for (int i = 0; i < n; ++i) {
          qx[i] = (px[i] * (1.0 + C) - py[i] * B) / vsq;
          qy[i] = (py[i] * (1.0 + A) - px[i] * B) / vsq;
          gd[i] = 1.0 - qx[i] * px[i] - qy[i] * py[i];
        }
        double acc0 = 0.0, acc1 = 0.0;
        double uniform = 0.0, actual = 0.0;
        for (int i = 0; i < n; ++i) {
          acc0 += gd[i] * ops.fast_diag(i, ii, s.f, 0);
          acc1 += gd[i] * ops.fast_diag(i, ii, s.f, 1);
          for (int j = i + 1; j < n; ++j) {
            const double gij = -(qx[i] * px[j] + qy[i] * py[j]);
            acc0 += 2.0 * gij * ops.fast_mixed(i, j, ii, s.f, 0);
            acc1 += 2.0 * gij * ops.fast_mixed(i, j, ii, s.f, 1);
          }
          const Grid::Link& lm = grid.links[static_cast<size_t>(ii)][static_cast<size_t>(i)][0];
          const Grid::Link& lp = grid.links[static_cast<size_t>(ii)][static_cast<size_t>(i)][1];
          const double hm = lm.neighbor >= 0 ? grid.h : lm.theta * grid.h;
          const double hp = lp.neighbor >= 0 ? grid.h : lp.theta * grid.h;
          uniform += gd[i] / (grid.h * grid.h);
          actual += gd[i] / (hm * hp);
        }
        s.rho[static_cast<size_t>(ii)] = actual > uniform ? uniform / actual : 1.0;
        s.update[static_cast<size_t>(ii)] = acc0;
        s.update[static_cast<size_t>(count) + static_cast<size_t>(ii)] = acc1;
        continue;
      }
      const Mat df = ops.jacobian(s.f, ii);
      const MetricState ms = metric_state(df);
      theta[static_cast<size_t>(ii)] = ms.theta;
      v2[static_cast<size_t>(ii)] = ms.v2;
      wedge[static_cast<size_t>(ii)] = ms.wedge2;
      mu1[static_cast<size_t>(ii)] = ms.mu[0];
      s.rho[static_cast<size_t>(ii)] = detail_flow::step_scale(grid, ms, ii);
      for (int a = 0; a < m; ++a) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          acc += ms.g_inv(i, i) * ops.fast_diag(i, ii, s.f, a);
          for (int j = i + 1; j < n; ++j)
            acc += 2.0 * ms.g_inv(i, j) * ops.fast_mixed(i, j, ii, s.f, a);
        }
        s.update[static_cast<size_t>(a) * static_cast<size_t>(count) + static_cast<size_t>(ii)] = acc;
      }
    }
  });

  // Deterministic reduction in node order.
  MonitorSample row;
  row.sup_v2 = 1.0;
  row.min_theta_interior = std::numeric_limits<double>::infinity();
  row.min_theta_band = std::numeric_limits<double>::infinity();
  row.max_wedge2 = 0.0;
  row.band_grad = 0.0;
  for (int64_t ii = 0; ii < count; ++ii) {
    const bool band =
        grid.cls[static_cast<size_t>(grid.flat_of[static_cast<size_t>(ii)])] == NodeClass::kBoundaryAdjacent;
    row.sup_v2 = std::max(row.sup_v2, v2[static_cast<size_t>(ii)]);
    row.max_wedge2 = std::max(row.max_wedge2, wedge[static_cast<size_t>(ii)]);
    if (band) {
      row.min_theta_band = std::min(row.min_theta_band, theta[static_cast<size_t>(ii)]);
      row.band_grad = std::max(row.band_grad, mu1[static_cast<size_t>(ii)]);
    } else {
      row.min_theta_interior = std::min(row.min_theta_interior, theta[static_cast<size_t>(ii)]);
    }
  }
  for (double u : s.update) row.sup_residual = std::max(row.sup_residual, std::fabs(u));

  if (s.monitors.empty()) {
    // The initial slice is part of the parabolic boundary in full.
    row.min_theta_parabolic = std::min(row.min_theta_interior, row.min_theta_band);
  } else {
    row.min_theta_parabolic = std::min(s.monitors.back().min_theta_parabolic, row.min_theta_band);
  }
  s.monitors.push_back(row);
}

inline FlowState flow_init(const DiffOps& ops, const BoundaryData& bd, int threads = 0) {
  FlowState s;
  s.f = bd.sample(ops.grid());
  flow_analyze(ops, s, threads);
  return s;
}

// One explicit step from the cached update direction; appends the monitor
// row of the new state.  Throws NonFinite if any updated value is not a
// finite number (the caller reports that as blowup).
inline FlowState flow_step(const DiffOps& ops, const FlowState& s, const FlowConfig& cfg) {
  const Grid& grid = ops.grid();
  const int64_t count = grid.inside_count();
  const double dt = cfg.sigma * grid.h * grid.h / (2.0 * grid.n);

  FlowState next;
  next.f = s.f;  // boundary cut values carried over unchanged
  next.t = s.t + dt;
  next.dt = dt;
  next.monitors = s.monitors;
  bool finite = true;
  for (int a = 0; a < s.f.m; ++a)
    for (int64_t ii = 0; ii < count; ++ii) {
      const double v =
          s.f.at(ii, a) + dt * s.rho[static_cast<size_t>(ii)] *
                              s.update[static_cast<size_t>(a) * static_cast<size_t>(count) +
                                       static_cast<size_t>(ii)];
      if (!std::isfinite(v)) finite = false;
      next.f.at(ii, a) = v;
    }
  if (!finite) throw Error("NonFinite", "flow step produced a non-finite value");
  flow_analyze(ops, next, cfg.threads);
  return next;
}

// Maximum-principle verdicts over the recorded monitor series:
// (a) the interior theta minimum never drops below the parabolic-boundary
//     minimum by more than tol_mp;
// (b) once max wedge2 settles below 1 - eps_margin, the sup of v^2 never
//     rises by more than tol_mp in a step.
inline MonitorVerdict monitor_check(const FlowState& s, double tol_mp, double eps_margin = 0.05) {
  MonitorVerdict v;
  for (size_t k = 0; k < s.monitors.size(); ++k) {
    const MonitorSample& row = s.monitors[k];
    if (std::isfinite(row.min_theta_interior))
      v.worst_theta_gap = std::max(v.worst_theta_gap,
                                   row.min_theta_parabolic - row.min_theta_interior);
    if (v.settled_step < 0 && row.max_wedge2 <= 1.0 - eps_margin)
      v.settled_step = static_cast<int64_t>(k);
    if (v.settled_step >= 0 && k > static_cast<size_t>(v.settled_step))
      v.worst_v2_rise = std::max(v.worst_v2_rise, row.sup_v2 - s.monitors[k - 1].sup_v2);
  }
  v.min_principle = v.worst_theta_gap <= tol_mp;
  v.v2_monotone = v.worst_v2_rise <= tol_mp;
  return v;
}

// Steps from the sampled Dirichlet data until the residual tolerance is
// met, a configured invariant trips, or the step budget runs out.
inline FlowResult flow_run(const DiffOps& ops, const BoundaryData& bd, const FlowConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const double tol_mp = cfg.tol_mp >= 0.0 ? cfg.tol_mp : 5.0 * ops.grid().h;

  FlowResult res;
  FlowState s = flow_init(ops, bd, cfg.threads);
  for (int64_t step = 0;; ++step) {
    const MonitorSample& row = s.monitors.back();
    if (row.sup_residual <= cfg.tol) {
      res.outcome = FlowOutcome::converged;
      break;
    }
    if (row.sup_v2 >= cfg.psi_cap) {
      res.outcome = FlowOutcome::invariant_violated;
      res.note = "sup v^2 reached the volume-density cap at step " + std::to_string(step);
      break;
    }
    if (row.sup_v2 >= cfg.beta0) {
      res.outcome = FlowOutcome::invariant_violated;
      res.note = "det g reached beta0 at step " + std::to_string(step);
      break;
    }
    if (row.band_grad > cfg.blowup_threshold) {
      res.outcome = FlowOutcome::blowup;
      res.note = "boundary-band gradient exceeded the blow-up threshold at step " +
                 std::to_string(step);
      break;
    }
    if (step >= cfg.max_steps) {
      res.outcome = FlowOutcome::max_steps;
      break;
    }
    if (cfg.checkpoint_every > 0 && cfg.checkpoint && step % cfg.checkpoint_every == 0)
      cfg.checkpoint(s);
    try {
      s = flow_step(ops, s, cfg);
    } catch (const Error& err) {
      if (std::string(err.code()) != "NonFinite") throw;
      res.outcome = FlowOutcome::blowup;
      res.note = "non-finite value at step " + std::to_string(step + 1);
      break;
    }
  }
  res.f = std::move(s.f);
  res.monitors = std::move(s.monitors);
  res.steps = static_cast<int64_t>(res.monitors.size()) - 1;
  FlowState probe;  // verdicts read only the series
  probe.monitors = res.monitors;
  res.verdict = monitor_check(probe, tol_mp, cfg.eps_margin);
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace mingraph
