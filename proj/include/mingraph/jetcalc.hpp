#pragma once

// Per-point differential geometry of a graph: Jacobian and Hessian jets,
// the induced metric g = I + Df Df^T with its inverse and determinant, the
// singular values of Df, the area-decreasing functional theta, and the
// minimal-surface residual in both its non-divergence and divergence forms.

#include <cmath>
#include <cstdint>
#include <vector>

#include "mingraph/errors.hpp"
#include "mingraph/field.hpp"
#include "mingraph/parallel.hpp"
#include "mingraph/smallmat.hpp"

namespace mingraph {

struct Jet {
  Mat df;                 // n x m first derivatives
  std::vector<Mat> d2f;   // per component: symmetric n x n
};

struct MetricState {
  Mat g;       // metric
  Mat g_inv;   // inverse metric
  double v2;   // det g >= 1 (the squared volume density)
  Vec mu;      // singular values of Df, descending, zero-padded
  double theta;   // 2(1 - mu1^2 mu2^2) / ((1 + mu1^2)(1 + mu2^2))
  double wedge2;  // max_{i<j} mu_i mu_j = mu1 mu2
  Svd frames;     // singular-value-adapted frames of Df
};

inline Jet jet(const DiffOps& ops, const VectorField& f, int64_t node) {
  const Grid& g = ops.grid();
  if (node < 0 || node >= g.inside_count())
    throw Error("OutsideDomain", "jet requested outside the domain");
  Jet j;
  j.df = ops.jacobian(f, node);
  j.d2f.reserve(static_cast<size_t>(f.m));
  for (int a = 0; a < f.m; ++a) j.d2f.push_back(ops.hessian(f, a, node));
  return j;
}

inline MetricState metric_state(const Mat& df) {
  const int n = df.rows;
  MetricState s;
  s.g = Mat(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double acc = (i == j) ? 1.0 : 0.0;
      for (int a = 0; a < df.cols; ++a) acc += df(i, a) * df(j, a);
      s.g(i, j) = acc;
      s.g(j, i) = acc;
    }
  }
  s.g_inv = inverse(s.g);
  s.v2 = det(s.g);
  s.frames = svd_gram(df);
  s.mu = s.frames.sigma;
  const double m1 = s.mu[0];
  const double m2 = n >= 2 ? s.mu[1] : 0.0;
  s.theta = 2.0 * (1.0 - m1 * m1 * m2 * m2) / ((1.0 + m1 * m1) * (1.0 + m2 * m2));
  s.wedge2 = m1 * m2;
  return s;
}

inline MetricState metric_state(const Jet& j) { return metric_state(j.df); }

// Residual of the graph system at every inside node:  r^alpha = g^{ij} f^alpha_{ij}.
// A zero residual (up to tolerance) certifies a discrete minimal graph.
inline std::vector<double> residual(const DiffOps& ops, const VectorField& f, int threads = 0) {
  const Grid& grid = ops.grid();
  const int n = grid.n;
  const int64_t count = grid.inside_count();
  if (threads <= 0) threads = default_threads();
  std::vector<double> r(static_cast<size_t>(count * f.m), 0.0);
  parallel_for(count, threads, [&](int64_t b, int64_t e) {
    for (int64_t ii = b; ii < e; ++ii) {
      const Mat df = ops.jacobian(f, ii);
      const MetricState ms = metric_state(df);
      for (int a = 0; a < f.m; ++a) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          acc += ms.g_inv(i, i) * ops.second_diag(i, ii).apply(f, a);
          for (int j = i + 1; j < n; ++j)
            acc += 2.0 * ms.g_inv(i, j) * ops.second_mixed(i, j, ii).apply(f, a);
        }
        r[static_cast<size_t>(a) * static_cast<size_t>(count) + static_cast<size_t>(ii)] = acc;
      }
    }
  });
  return r;
}

inline double sup_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::fabs(x));
  return s;
}

// Sup of a component-major per-node array over strict-interior nodes (the
// one-sided boundary stencils are first order, so defect measurements on
// sampled analytic fields read the interior).
inline double interior_sup(const Grid& grid, const std::vector<double>& values, int comps) {
  const int64_t count = grid.inside_count();
  double s = 0.0;
  for (int a = 0; a < comps; ++a)
    for (int64_t ii = 0; ii < count; ++ii) {
      if (grid.cls[static_cast<size_t>(grid.flat_of[static_cast<size_t>(ii)])] != NodeClass::kInterior)
        continue;
      s = std::max(s, std::fabs(values[static_cast<size_t>(a) * static_cast<size_t>(count) +
                                       static_cast<size_t>(ii)]));
    }
  return s;
}

// Sup restricted to nodes whose whole second-derivative stencil is second
// order (see DiffOps::second_order_at); the natural norm for truncation
// studies of sampled analytic fields.
inline double second_order_sup(const DiffOps& ops, const std::vector<double>& values, int comps) {
  const int64_t count = ops.grid().inside_count();
  double s = 0.0;
  for (int a = 0; a < comps; ++a)
    for (int64_t ii = 0; ii < count; ++ii) {
      if (!ops.second_order_at(ii)) continue;
      s = std::max(s, std::fabs(values[static_cast<size_t>(a) * static_cast<size_t>(count) +
                                       static_cast<size_t>(ii)]));
    }
  return s;
}

// Divergence-form residual, used as an independent cross-check: the first
// n entries per node are sum_i d_i(sqrt(det g) g^{ij}), the last m are
// sum_i d_i(sqrt(det g) g^{ij} f^alpha_j).  Evaluated by plain central
// differences at nodes whose axis neighbors are all inside; other nodes
// report zero with mask = 0.
struct DivergenceResidual {
  std::vector<double> values;  // (n + m) per node, component-major
  std::vector<uint8_t> mask;   // 1 where evaluated
};

inline DivergenceResidual divergence_residual(const DiffOps& ops, const VectorField& f,
                                              int threads = 0) {
  const Grid& grid = ops.grid();
  const int n = grid.n;
  const int m = f.m;
  const int64_t count = grid.inside_count();
  if (threads <= 0) threads = default_threads();

  // Pass 1: the flux fields P_{ij} = sqrt(det g) g^{ij} and
  // B_{i alpha} = sum_j P_{ij} f^alpha_j at every inside node.
  std::vector<double> flux_p(static_cast<size_t>(count) * static_cast<size_t>(n * n));
  std::vector<double> flux_b(static_cast<size_t>(count) * static_cast<size_t>(n * m));
  parallel_for(count, threads, [&](int64_t b, int64_t e) {
    for (int64_t ii = b; ii < e; ++ii) {
      const Mat df = ops.jacobian(f, ii);
      const MetricState ms = metric_state(df);
      const double sq = std::sqrt(ms.v2);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
          flux_p[static_cast<size_t>(ii) * static_cast<size_t>(n * n) + static_cast<size_t>(i * n + j)] =
              sq * ms.g_inv(i, j);
        for (int a = 0; a < m; ++a) {
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += sq * ms.g_inv(i, j) * df(j, a);
          flux_b[static_cast<size_t>(ii) * static_cast<size_t>(n * m) + static_cast<size_t>(i * m + a)] = acc;
        }
      }
    }
  });

  DivergenceResidual out;
  out.values.assign(static_cast<size_t>(count) * static_cast<size_t>(n + m), 0.0);
  out.mask.assign(static_cast<size_t>(count), 0);
  parallel_for(count, threads, [&](int64_t b, int64_t e) {
    for (int64_t ii = b; ii < e; ++ii) {
      // Evaluate only where the node and its whole axis stencil are strict
      // interior: there all first derivatives feeding the flux are uniform
      // central differences, so the truncation error field stays smooth
      // and the divergence inherits the second-order rate.
      bool deep = grid.cls[static_cast<size_t>(grid.flat_of[static_cast<size_t>(ii)])] == NodeClass::kInterior;
      for (int axis = 0; axis < n && deep; ++axis)
        for (int side = 0; side < 2 && deep; ++side) {
          const int64_t nb =
              grid.links[static_cast<size_t>(ii)][static_cast<size_t>(axis)][static_cast<size_t>(side)].neighbor;
          if (nb < 0 || grid.cls[static_cast<size_t>(grid.flat_of[static_cast<size_t>(nb)])] != NodeClass::kInterior)
            deep = false;
        }
      if (!deep) continue;
      out.mask[static_cast<size_t>(ii)] = 1;
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          const int64_t im = grid.links[static_cast<size_t>(ii)][static_cast<size_t>(i)][0].neighbor;
          const int64_t ip = grid.links[static_cast<size_t>(ii)][static_cast<size_t>(i)][1].neighbor;
          acc += (flux_p[static_cast<size_t>(ip) * static_cast<size_t>(n * n) + static_cast<size_t>(i * n + j)] -
                  flux_p[static_cast<size_t>(im) * static_cast<size_t>(n * n) + static_cast<size_t>(i * n + j)]) /
                 (2.0 * grid.h);
        }
        out.values[static_cast<size_t>(j) * static_cast<size_t>(count) + static_cast<size_t>(ii)] = acc;
      }
      for (int a = 0; a < m; ++a) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          const int64_t im = grid.links[static_cast<size_t>(ii)][static_cast<size_t>(i)][0].neighbor;
          const int64_t ip = grid.links[static_cast<size_t>(ii)][static_cast<size_t>(i)][1].neighbor;
          acc += (flux_b[static_cast<size_t>(ip) * static_cast<size_t>(n * m) + static_cast<size_t>(i * m + a)] -
                  flux_b[static_cast<size_t>(im) * static_cast<size_t>(n * m) + static_cast<size_t>(i * m + a)]) /
                 (2.0 * grid.h);
        }
        out.values[static_cast<size_t>(n + a) * static_cast<size_t>(count) + static_cast<size_t>(ii)] = acc;
      }
    }
  });
  return out;
}

}  // namespace mingraph
