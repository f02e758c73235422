#pragma once

// The elliptic side of the laboratory: a damped Newton solver for the
// graph system, continuation in the boundary-data scale t, the
// second-variation quadratic form in singular-value-adapted frames, the
// first-eigenvalue estimate lambda*, an empirical stability margin, and
// a uniqueness probe by perturbed reconvergence.
//
// Newton solves the same non-divergence residual the flow relaxes
// (g^{ij} d_ij u^a = 0), so the two solvers share one fixed point per
// grid and can be cross-checked to solver tolerance.

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mingraph/boundary.hpp"
#include "mingraph/errors.hpp"
#include "mingraph/field.hpp"
#include "mingraph/jetcalc.hpp"
#include "mingraph/parallel.hpp"
#include "mingraph/rng.hpp"

namespace mingraph {

struct NewtonOptions {
  double tol = 1e-10;       // sup-norm residual target
  int max_iters = 50;
  bool fd_jacobian = false;  // finite-difference Jacobian (test oracle; small grids)
  int threads = 0;
};

namespace detail_newton {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Analytic Jacobian of F^a(u) = g^{ij}(Du) d_ij u^a at the current field.
// The second-derivative rows contribute within the component; the metric
// dependence couples components through
//   dF^a/dDf(i,b) = -2 (g^{-1} H^a g^{-1} Df e_b)_i,
// which chains through the first-derivative rows (from dg^{-1} =
// -g^{-1} (dg) g^{-1} and dg_pq/dDf(i,b) = delta_pi Df(q,b) + delta_qi Df(p,b)).
inline SpMat analytic_jacobian(const DiffOps& ops, const VectorField& f) {
  const Grid& grid = ops.grid();
  const int n = grid.n;
  const int m = f.m;
  const int64_t count = grid.inside_count();
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(count) * static_cast<size_t>(m * (6 * n + 3 * n * m)));

  for (int64_t ii = 0; ii < count; ++ii) {
    const Mat df = ops.jacobian(f, ii);
    const MetricState ms = metric_state(df);
    std::vector<Mat> hess;
    hess.reserve(static_cast<size_t>(m));
    for (int a = 0; a < m; ++a) hess.push_back(ops.hessian(f, a, ii));

    for (int a = 0; a < m; ++a) {
      const int64_t row = static_cast<int64_t>(a) * count + ii;
      // Second-derivative rows, frozen metric.
      for (int i = 0; i < n; ++i) {
        for (const auto& [node, w] : ops.second_diag(i, ii).nodes)
          trips.emplace_back(row, static_cast<int64_t>(a) * count + node, ms.g_inv(i, i) * w);
        for (int j = i + 1; j < n; ++j)
          for (const auto& [node, w] : ops.second_mixed(i, j, ii).nodes)
            trips.emplace_back(row, static_cast<int64_t>(a) * count + node,
                               2.0 * ms.g_inv(i, j) * w);
      }
      // Metric variation: M = g^{-1} H^a g^{-1}, then -2 (M Df e_b)_i.
      Mat mmat(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q)
              acc += ms.g_inv(i, p) * hess[static_cast<size_t>(a)](p, q) * ms.g_inv(q, j);
          mmat(i, j) = acc;
        }
      for (int b = 0; b < m; ++b) {
        for (int i = 0; i < n; ++i) {
          double coef = 0.0;
          for (int j = 0; j < n; ++j) coef += mmat(i, j) * df(j, b);
          coef *= -2.0;
          if (coef == 0.0) continue;
          for (const auto& [node, w] : ops.first(i, ii).nodes)
            trips.emplace_back(row, static_cast<int64_t>(b) * count + node, coef * w);
        }
      }
    }
  }
  SpMat jac(count * m, count * m);
  jac.setFromTriplets(trips.begin(), trips.end());
  return jac;
}

// Column-probing finite-difference Jacobian; quadratic cost, intended
// only as an independent oracle on small grids.
inline SpMat fd_jacobian(const DiffOps& ops, const VectorField& f, int threads) {
  const int64_t dim = ops.grid().inside_count() * f.m;
  const std::vector<double> base = residual(ops, f, threads);
  double scale = 1.0;
  for (double v : f.values) scale = std::max(scale, std::fabs(v));
  const double eps = 1e-7 * scale;
  std::vector<Triplet> trips;
  VectorField probe = f;
  for (int64_t k = 0; k < dim; ++k) {
    probe.values[static_cast<size_t>(k)] += eps;
    const std::vector<double> shifted = residual(ops, probe, threads);
    probe.values[static_cast<size_t>(k)] = f.values[static_cast<size_t>(k)];
    for (int64_t r = 0; r < dim; ++r) {
      const double d = (shifted[static_cast<size_t>(r)] - base[static_cast<size_t>(r)]) / eps;
      if (d != 0.0) trips.emplace_back(r, k, d);
    }
  }
  SpMat jac(dim, dim);
  jac.setFromTriplets(trips.begin(), trips.end());
  return jac;
}

inline Eigen::VectorXd solve_linear(const SpMat& jac, const Eigen::VectorXd& rhs) {
  Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<double>> iterative;
  iterative.setTolerance(1e-12);
  iterative.setMaxIterations(4000);
  iterative.compute(jac);
  if (iterative.info() == Eigen::Success) {
    const Eigen::VectorXd x = iterative.solve(rhs);
    if (iterative.info() == Eigen::Success &&
        (jac * x - rhs).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + rhs.cwiseAbs().maxCoeff()))
      return x;
  }
  Eigen::SparseLU<SpMat> direct;
  direct.compute(jac);
  if (direct.info() != Eigen::Success)
    throw Error("NoConvergence", "linearized system is singular");
  return direct.solve(rhs);
}

}  // namespace detail_newton

// Damped Newton on the discrete residual, from `initial` (whose boundary
// cut values are replaced by the exact Dirichlet data).
inline VectorField newton_solve(const DiffOps& ops, const BoundaryData& bd,
                                const VectorField& initial, const NewtonOptions& opts = {}) {
  const Grid& grid = ops.grid();
  if (initial.m != bd.m()) throw Error("BadCondition", "component count mismatch");
  const int64_t dim = grid.inside_count() * initial.m;

  VectorField u = initial;
  {
    const VectorField data = bd.sample(grid);
    u.cut_values = data.cut_values;
  }
  std::vector<double> r = residual(ops, u, opts.threads);
  double rn = sup_norm(r);
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    if (rn <= opts.tol) return u;
    const detail_newton::SpMat jac = opts.fd_jacobian
                                         ? detail_newton::fd_jacobian(ops, u, opts.threads)
                                         : detail_newton::analytic_jacobian(ops, u);
    Eigen::VectorXd rhs(dim);
    for (int64_t k = 0; k < dim; ++k) rhs[k] = -r[static_cast<size_t>(k)];
    const Eigen::VectorXd delta = detail_newton::solve_linear(jac, rhs);

    // Halve the step until the residual norm decreases.
    double s = 1.0;
    bool accepted = false;
    while (s > 1e-8) {
      VectorField trial = u;
      for (int64_t k = 0; k < dim; ++k) trial.values[static_cast<size_t>(k)] += s * delta[k];
      const std::vector<double> rt = residual(ops, trial, opts.threads);
      const double rtn = sup_norm(rt);
      if (rtn < rn) {
        u = std::move(trial);
        r = rt;
        rn = rtn;
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) break;
  }
  if (rn <= opts.tol) return u;
  throw Error("NoConvergence",
              "Newton stalled at sup residual " + std::to_string(rn) + " after " +
                  std::to_string(opts.max_iters) + " iterations");
}

// ---------------------------------------------------------------------------
// Variations and the second-variation quadratic form.

// m scalars per inside node, identically zero on the boundary band (and,
// implicitly, at the cut points): the discrete stand-in for a compactly
// supported variation.
struct VariationField {
  int m = 0;
  std::vector<double> values;  // m * inside_count, component-major

  static VariationField zero(const Grid& grid, int m) {
    VariationField v;
    v.m = m;
    v.values.assign(static_cast<size_t>(grid.inside_count() * m), 0.0);
    return v;
  }
};

// Gaussian entries at strict-interior nodes; the band stays zero.
inline VariationField random_variation(const Grid& grid, int m, Rng& rng) {
  VariationField v = VariationField::zero(grid, m);
  const int64_t count = grid.inside_count();
  for (int a = 0; a < m; ++a)
    for (int64_t ii = 0; ii < count; ++ii)
      if (grid.cls[static_cast<size_t>(grid.flat_of[static_cast<size_t>(ii)])] ==
          NodeClass::kInterior)
        v.values[static_cast<size_t>(a) * static_cast<size_t>(count) + static_cast<size_t>(ii)] =
            rng.normal();
  return v;
}

namespace detail_sv {

// Integrand of the second variation at one point, in the singular-value
// frame of Du: phi_rot = U^T Dphi V, lam the singular values.
//   sum_{i,a} phi_rot(i,a)^2 / (1 + lam_i^2)
// + sum_{i,j} lam_i lam_j / ((1+lam_i^2)(1+lam_j^2)) *
//     (-2 phi_rot(i,j) phi_rot(j,i) + phi_rot(i,i) phi_rot(j,j)).
// Terms of the second sum with lam zero vanish, so it runs over
// i, j < min(n, m).  Ties in the singular values leave the value
// unchanged (the expression is frame-covariant), so no tie-breaking is
// needed beyond the deterministic frames svd_gram already returns.
inline double integrand(const Svd& frames, const Vec& lam, const Mat& dphi) {
  const int n = dphi.rows, m = dphi.cols;
  Mat rot(n, m);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) {
      double acc = 0.0;
      for (int p = 0; p < n; ++p)
        for (int q = 0; q < m; ++q) acc += frames.u(p, i) * dphi(p, q) * frames.v(q, a);
      rot(i, a) = acc;
    }
  double q = 0.0;
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) q += rot(i, a) * rot(i, a) / (1.0 + lam[i] * lam[i]);
  const int k = std::min(n, m);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double c = lam[i] * lam[j] / ((1.0 + lam[i] * lam[i]) * (1.0 + lam[j] * lam[j]));
      if (c == 0.0) continue;
      q += c * (-2.0 * rot(i, j) * rot(j, i) + rot(i, i) * rot(j, j));
    }
  return q;
}

inline VectorField as_field(const Grid& grid, const VariationField& phi) {
  VectorField f(grid, phi.m);
  f.values = phi.values;
  return f;  // cut values stay zero
}

inline void check_supported(const Grid& grid, const VariationField& phi) {
  const int64_t count = grid.inside_count();
  for (int a = 0; a < phi.m; ++a)
    for (int64_t ii = 0; ii < count; ++ii)
      if (grid.cls[static_cast<size_t>(grid.flat_of[static_cast<size_t>(ii)])] ==
              NodeClass::kBoundaryAdjacent &&
          phi.values[static_cast<size_t>(a) * static_cast<size_t>(count) +
                     static_cast<size_t>(ii)] != 0.0)
        throw Error("UnsupportedVariation", "variation is nonzero on the boundary band");
}

}  // namespace detail_sv

// Q(phi): the integrand above times sqrt(det g), summed over inside nodes
// with cell weight h^n.
inline double second_variation_form(const DiffOps& ops, const VectorField& u,
                                    const VariationField& phi) {
  const Grid& grid = ops.grid();
  if (phi.m != u.m) throw Error("BadCondition", "component count mismatch");
  detail_sv::check_supported(grid, phi);
  const VectorField pf = detail_sv::as_field(grid, phi);
  const int64_t count = grid.inside_count();
  double total = 0.0;
  for (int64_t ii = 0; ii < count; ++ii) {
    const Mat df = ops.jacobian(u, ii);
    const MetricState ms = metric_state(df);
    const Mat dphi = ops.jacobian(pf, ii);
    total += detail_sv::integrand(ms.frames, ms.mu, dphi) * std::sqrt(ms.v2);
  }
  return total * std::pow(grid.h, grid.n);
}

// Discrete area of the graph: sum of sqrt(det g) h^n over inside nodes.
inline double discrete_area(const DiffOps& ops, const VectorField& u) {
  const Grid& grid = ops.grid();
  double total = 0.0;
  for (int64_t ii = 0; ii < grid.inside_count(); ++ii) {
    const MetricState ms = metric_state(ops.jacobian(u, ii));
    total += std::sqrt(ms.v2);
  }
  return total * std::pow(grid.h, grid.n);
}

namespace detail_sv {

using SpMat = Eigen::SparseMatrix<double>;

// Assembles Q as a sparse symmetric matrix over the strict-interior
// unknowns, plus the diagonal mass sum |phi|^2 sqrt(det g) h^n.  The
// per-node quadratic form in vec(Dphi) is recovered by polarization of
// the closed-form integrand (at most a 16x16 block).
struct Pencil {
  SpMat a;
  Eigen::VectorXd mass;
  std::vector<int64_t> unknown_of;  // inside index -> unknown slot or -1
  int64_t interior_count = 0;
  int m = 0;
};

inline Pencil assemble_pencil(const DiffOps& ops, const VectorField& u) {
  const Grid& grid = ops.grid();
  const int n = grid.n;
  const int m = u.m;
  const int64_t count = grid.inside_count();

  Pencil p;
  p.m = m;
  p.unknown_of.assign(static_cast<size_t>(count), -1);
  for (int64_t ii = 0; ii < count; ++ii)
    if (grid.cls[static_cast<size_t>(grid.flat_of[static_cast<size_t>(ii)])] ==
        NodeClass::kInterior)
      p.unknown_of[static_cast<size_t>(ii)] = p.interior_count++;
  const int64_t dim = p.interior_count * m;
  p.mass = Eigen::VectorXd::Zero(dim);

  const double hn = std::pow(grid.h, n);
  const int nm = n * m;
  std::vector<Eigen::Triplet<double>> trips;

  for (int64_t ii = 0; ii < count; ++ii) {
    const MetricState ms = metric_state(ops.jacobian(u, ii));
    const double weight = std::sqrt(ms.v2) * hn;

    // Polarize the integrand into a dense nm x nm block K.
    auto q_of = [&](const std::vector<double>& vecd) {
      Mat dphi(n, m);
      for (int i = 0; i < n; ++i)
        for (int a = 0; a < m; ++a) dphi(i, a) = vecd[static_cast<size_t>(a * n + i)];
      return integrand(ms.frames, ms.mu, dphi);
    };
    std::vector<double> kmat(static_cast<size_t>(nm * nm), 0.0);
    std::vector<double> basis(static_cast<size_t>(nm), 0.0);
    std::vector<double> diag(static_cast<size_t>(nm), 0.0);
    for (int k = 0; k < nm; ++k) {
      basis[static_cast<size_t>(k)] = 1.0;
      diag[static_cast<size_t>(k)] = q_of(basis);
      basis[static_cast<size_t>(k)] = 0.0;
      kmat[static_cast<size_t>(k * nm + k)] = diag[static_cast<size_t>(k)];
    }
    for (int k = 0; k < nm; ++k)
      for (int l = k + 1; l < nm; ++l) {
        basis[static_cast<size_t>(k)] = 1.0;
        basis[static_cast<size_t>(l)] = 1.0;
        const double cross =
            0.5 * (q_of(basis) - diag[static_cast<size_t>(k)] - diag[static_cast<size_t>(l)]);
        basis[static_cast<size_t>(k)] = 0.0;
        basis[static_cast<size_t>(l)] = 0.0;
        kmat[static_cast<size_t>(k * nm + l)] = cross;
        kmat[static_cast<size_t>(l * nm + k)] = cross;
      }

    // G maps unknowns to vec(Dphi): the first-derivative rows restricted
    // to interior nodes (band and cut contributions vanish).
    std::vector<std::vector<std::pair<int64_t, double>>> rows(static_cast<size_t>(nm));
    for (int a = 0; a < m; ++a)
      for (int i = 0; i < n; ++i) {
        auto& out = rows[static_cast<size_t>(a * n + i)];
        for (const auto& [node, w] : ops.first(i, ii).nodes) {
          const int64_t slot = p.unknown_of[static_cast<size_t>(node)];
          if (slot >= 0) out.emplace_back(slot + static_cast<int64_t>(a) * p.interior_count, w);
        }
      }
    for (int k = 0; k < nm; ++k)
      for (int l = 0; l < nm; ++l) {
        const double kv = weight * kmat[static_cast<size_t>(k * nm + l)];
        if (kv == 0.0) continue;
        for (const auto& [rk, wk] : rows[static_cast<size_t>(k)])
          for (const auto& [rl, wl] : rows[static_cast<size_t>(l)])
            trips.emplace_back(rk, rl, kv * wk * wl);
      }

    const int64_t slot = p.unknown_of[static_cast<size_t>(ii)];
    if (slot >= 0)
      for (int a = 0; a < m; ++a)
        p.mass[slot + static_cast<int64_t>(a) * p.interior_count] += std::sqrt(ms.v2) * hn;
  }
  p.a = SpMat(dim, dim);
  p.a.setFromTriplets(trips.begin(), trips.end());
  return p;
}

}  // namespace detail_sv

// Smallest generalized eigenvalue of the second-variation pencil by
// inverse power iteration; a negative value reports an indefinite form.
inline double estimate_lambda_star(const DiffOps& ops, const VectorField& u,
                                   double rel_tol = 1e-6) {
  const detail_sv::Pencil pencil = detail_sv::assemble_pencil(ops, u);
  const int64_t dim = pencil.mass.size();
  if (dim == 0) throw Error("EmptyDomain", "no strict-interior node to vary");

  Eigen::SparseLU<detail_sv::SpMat> lu;
  lu.compute(pencil.a);
  if (lu.info() != Eigen::Success)
    throw Error("NoConvergence", "second-variation form is singular");

  Eigen::VectorXd x = Eigen::VectorXd::Ones(dim);
  x /= std::sqrt(x.dot(pencil.mass.cwiseProduct(x)));
  double lam = 0.0, prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd y = lu.solve(pencil.mass.cwiseProduct(x));
    y /= std::sqrt(y.dot(pencil.mass.cwiseProduct(y)));
    lam = y.dot(pencil.a * y) / y.dot(pencil.mass.cwiseProduct(y));
    x = y;
    if (std::fabs(lam - prev) <= rel_tol * std::fabs(lam)) break;
    prev = lam;
  }
  return lam;
}

// Empirical stand-in for the stability constant: the minimum over random
// variations of Q(phi) / sum_a int |Dphi^a|^2 dmu.
inline double stability_margin(const DiffOps& ops, const VectorField& u, int samples,
                               uint64_t seed) {
  const Grid& grid = ops.grid();
  const int k = std::min(grid.n, u.m);
  if (k >= 2) {
    const double cap = 1.0 / std::sqrt(static_cast<double>(k - 1));
    double worst = 0.0;
    for (int64_t ii = 0; ii < grid.inside_count(); ++ii)
      worst = std::max(worst, metric_state(ops.jacobian(u, ii)).wedge2);
    if (worst > cap)
      throw Error("PreconditionFailed",
                  "max |wedge^2 du| = " + std::to_string(worst) + " exceeds " + std::to_string(cap));
  }
  if (samples < 1) throw Error("BadCondition", "need samples >= 1");

  Rng root(seed);
  double margin = std::numeric_limits<double>::infinity();
  const double hn = std::pow(grid.h, grid.n);
  for (int s = 0; s < samples; ++s) {
    Rng rng = root.spawn(static_cast<uint64_t>(s));
    const VariationField phi = random_variation(grid, u.m, rng);
    const double q = second_variation_form(ops, u, phi);
    const VectorField pf = detail_sv::as_field(grid, phi);
    double denom = 0.0;
    for (int64_t ii = 0; ii < grid.inside_count(); ++ii) {
      const MetricState ms = metric_state(ops.jacobian(u, ii));
      const Mat dphi = ops.jacobian(pf, ii);
      double fro = 0.0;
      for (int i = 0; i < grid.n; ++i)
        for (int a = 0; a < u.m; ++a) fro += dphi(i, a) * dphi(i, a);
      denom += fro * std::sqrt(ms.v2);
    }
    denom *= hn;
    if (denom > 0.0) margin = std::min(margin, q / denom);
  }
  return margin;
}

// Perturbed-reconvergence uniqueness experiment: true iff every Newton
// restart from u + (random compactly supported field of sup norm `scale`)
// lands back on u within 10x the Newton tolerance.
inline bool uniqueness_probe(const DiffOps& ops, const BoundaryData& bd, const VectorField& u,
                             double scale, int trials, uint64_t seed,
                             const NewtonOptions& opts = {}) {
  const Grid& grid = ops.grid();
  Rng root(seed);
  for (int t = 0; t < trials; ++t) {
    Rng rng = root.spawn(static_cast<uint64_t>(t));
    VectorField pert = u;
    if (scale > 0.0) {
      VariationField noise = random_variation(grid, u.m, rng);
      double sup = 0.0;
      for (double v : noise.values) sup = std::max(sup, std::fabs(v));
      if (sup > 0.0)
        for (size_t i = 0; i < noise.values.size(); ++i)
          pert.values[i] += noise.values[i] * (scale / sup);
    }
    VectorField back;
    try {
      back = newton_solve(ops, bd, pert, opts);
    } catch (const Error&) {
      return false;
    }
    double diff = 0.0;
    for (size_t i = 0; i < back.values.size(); ++i)
      diff = std::max(diff, std::fabs(back.values[i] - u.values[i]));
    if (diff > 10.0 * opts.tol) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Continuation in the boundary-data scale.

struct ContinuationOptions {
  NewtonOptions newton;
  double psi_cap = std::numeric_limits<double>::infinity();  // J-monitor threshold
  double t_min_step = 1.0 / 1024.0;
  bool track_lambda = false;
  double lambda_rel_tol = 1e-6;
};

struct ContinuationState {
  double t = 0.0;
  VectorField u;
  double lambda_star = std::numeric_limits<double>::quiet_NaN();
  double sup_v2 = 1.0;
  double min_theta = 2.0;
};

// Solves at t = k/steps for data (t psi^1, t psi^2), walking each
// interval with bisection when Newton or the J-monitors fail; throws
// PathStuck with the last good t when the step floor is reached.
inline std::vector<ContinuationState> continuation_run(const DiffOps& ops, const BoundaryData& bd,
                                                       int steps,
                                                       const ContinuationOptions& opts = {}) {
  if (bd.m() != 2) throw Error("BadCondition", "continuation expects exactly two components");
  if (steps < 1) throw Error("BadCondition", "need steps >= 1");
  const Grid& grid = ops.grid();

  auto monitors_of = [&](const VectorField& u, ContinuationState& st) {
    st.sup_v2 = 1.0;
    st.min_theta = std::numeric_limits<double>::infinity();
    for (int64_t ii = 0; ii < grid.inside_count(); ++ii) {
      const MetricState ms = metric_state(ops.jacobian(u, ii));
      st.sup_v2 = std::max(st.sup_v2, ms.v2);
      st.min_theta = std::min(st.min_theta, ms.theta);
    }
  };
  auto in_j = [&](const ContinuationState& st) {
    return st.sup_v2 < opts.psi_cap && st.min_theta > 1.0 / opts.psi_cap;
  };

  std::vector<ContinuationState> path;
  {
    ContinuationState st;
    st.t = 0.0;
    st.u = newton_solve(ops, bd.scaled(0.0), VectorField(grid, 2), opts.newton);
    monitors_of(st.u, st);
    if (opts.track_lambda) st.lambda_star = estimate_lambda_star(ops, st.u, opts.lambda_rel_tol);
    path.push_back(std::move(st));
  }

  for (int k = 1; k <= steps; ++k) {
    const double target = static_cast<double>(k) / steps;
    while (path.back().t < target) {
      double dt = target - path.back().t;
      bool advanced = false;
      while (dt >= opts.t_min_step * (1.0 - 1e-12)) {
        const double t2 = path.back().t + dt;
        try {
          ContinuationState st;
          st.t = t2;
          st.u = newton_solve(ops, bd.scaled(t2), path.back().u, opts.newton);
          monitors_of(st.u, st);
          if (!in_j(st)) throw Error("MonitorTrip", "left the continuation regime");
          if (opts.track_lambda)
            st.lambda_star = estimate_lambda_star(ops, st.u, opts.lambda_rel_tol);
          path.push_back(std::move(st));
          advanced = true;
          break;
        } catch (const Error& err) {
          if (err.code() != "NoConvergence" && err.code() != "MonitorTrip") throw;
          dt *= 0.5;
        }
      }
      if (!advanced)
        throw Error("PathStuck", "continuation stalled at t = " + std::to_string(path.back().t));
    }
  }
  return path;
}

}  // namespace mingraph
