#pragma once

// Sampled vector fields over a grid and the affine difference operators
// that everything downstream (residuals, flow stepping, Newton assembly)
// shares.  A first or second derivative at an inside node is a fixed
// linear combination of inside-node values plus boundary values at cut
// points; precomputing those rows once per grid keeps every consumer of
// derivatives numerically identical.

#include <cstdint>
#include <utility>
#include <vector>

#include "mingraph/domain.hpp"
#include "mingraph/errors.hpp"
#include "mingraph/smallmat.hpp"

namespace mingraph {

// m graph heights per inside node plus the Dirichlet values at the cut
// points.  Storage is component-major: values[alpha * N + node].
struct VectorField {
  const Grid* grid = nullptr;
  int m = 0;
  std::vector<double> values;      // m * inside_count
  std::vector<double> cut_values;  // m * cut_points.size()

  VectorField() = default;
  VectorField(const Grid& g, int m_)
      : grid(&g),
        m(m_),
        values(static_cast<size_t>(g.inside_count() * m_), 0.0),
        cut_values(g.cut_points.size() * static_cast<size_t>(m_), 0.0) {}

  double& at(int64_t node, int alpha) {
    return values[static_cast<size_t>(alpha) * static_cast<size_t>(grid->inside_count()) +
                  static_cast<size_t>(node)];
  }
  double at(int64_t node, int alpha) const {
    return values[static_cast<size_t>(alpha) * static_cast<size_t>(grid->inside_count()) +
                  static_cast<size_t>(node)];
  }
  double& cut_at(int64_t cut, int alpha) {
    return cut_values[static_cast<size_t>(alpha) * grid->cut_points.size() + static_cast<size_t>(cut)];
  }
  double cut_at(int64_t cut, int alpha) const {
    return cut_values[static_cast<size_t>(alpha) * grid->cut_points.size() + static_cast<size_t>(cut)];
  }
};

// One difference-quotient row: value = sum w * u[node] + sum w * bc[cut].
struct StencilRow {
  std::vector<std::pair<int64_t, double>> nodes;  // (inside index, weight)
  std::vector<std::pair<int64_t, double>> cuts;   // (cut index, weight)
  bool valid = true;  // false only for mixed derivatives in degenerate slivers

  double apply(const VectorField& f, int alpha) const {
    double s = 0.0;
    for (const auto& [idx, w] : nodes) s += w * f.at(idx, alpha);
    for (const auto& [idx, w] : cuts) s += w * f.cut_at(idx, alpha);
    return s;
  }
};

// All derivative rows for one grid.  first[axis][node], second diagonal
// [axis][node], and mixed [pair][node] with pair = upper-triangle order
// (0,1),(0,2),...,(1,2),... for i < j.
class DiffOps {
 public:
  explicit DiffOps(const Grid& g) : grid_(&g) { build(); }

  const Grid& grid() const { return *grid_; }

  const StencilRow& first(int axis, int64_t node) const {
    return first_[static_cast<size_t>(axis)][static_cast<size_t>(node)];
  }
  const StencilRow& second_diag(int axis, int64_t node) const {
    return diag_[static_cast<size_t>(axis)][static_cast<size_t>(node)];
  }
  const StencilRow& second_mixed(int i, int j, int64_t node) const {
    return mixed_[static_cast<size_t>(pair_index(i, j))][static_cast<size_t>(node)];
  }
  const StencilRow& second(int i, int j, int64_t node) const {
    return i == j ? second_diag(i, node) : second_mixed(i, j, node);
  }

  // Cache-friendly mirrors of the rows above for hot loops (flow stepping
  // visits every row of every node each step).  The packed entries keep
  // the exact weights and summation order of StencilRow::apply, so the two
  // access paths are bitwise interchangeable.
  double fast_first(int axis, int64_t node, const VectorField& f, int alpha) const {
    return papply(node * rows_per_node() + axis, f, alpha);
  }
  double fast_diag(int axis, int64_t node, const VectorField& f, int alpha) const {
    return papply(node * rows_per_node() + grid_->n + axis, f, alpha);
  }
  double fast_mixed(int i, int j, int64_t node, const VectorField& f, int alpha) const {
    return papply(node * rows_per_node() + 2 * grid_->n + pair_index(i, j), f, alpha);
  }

  // True where every second-derivative row is genuinely second order: no
  // cut links (the Shortley-Weller row with unequal arms is first order)
  // and every mixed derivative got the symmetric 4-point cross.  Defect
  // measurements on sampled analytic fields should restrict to these
  // nodes; one-sided corner stencils are only first order.
  bool second_order_at(int64_t node) const { return regular_[static_cast<size_t>(node)] != 0; }

  int pair_index(int i, int j) const {
    if (i > j) std::swap(i, j);
    // upper-triangle linearization for i < j
    const int n = grid_->n;
    return i * n - i * (i + 1) / 2 + (j - i - 1);
  }

  // Df(i, alpha) = d f^alpha / d x_i
  Mat jacobian(const VectorField& f, int64_t node) const {
    const int n = grid_->n;
    Mat df(n, f.m);
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < f.m; ++a) df(i, a) = first(i, node).apply(f, a);
    return df;
  }

  Mat hessian(const VectorField& f, int alpha, int64_t node) const {
    const int n = grid_->n;
    Mat h(n, n);
    for (int i = 0; i < n; ++i) {
      h(i, i) = second_diag(i, node).apply(f, alpha);
      for (int j = i + 1; j < n; ++j) {
        const double v = second_mixed(i, j, node).apply(f, alpha);
        h(i, j) = v;
        h(j, i) = v;
      }
    }
    return h;
  }

 private:
  int rows_per_node() const {
    const int n = grid_->n;
    return 2 * n + n * (n - 1) / 2;
  }

  double papply(int64_t row, const VectorField& f, int alpha) const {
    const double* vals =
        f.values.data() + static_cast<size_t>(alpha) * static_cast<size_t>(grid_->inside_count());
    const double* cuts = f.cut_values.data() + static_cast<size_t>(alpha) * grid_->cut_points.size();
    double s = 0.0;
    const int64_t end = pk_off_[static_cast<size_t>(row) + 1];
    for (int64_t k = pk_off_[static_cast<size_t>(row)]; k < end; ++k) {
      const PackedEntry& e = pk_[static_cast<size_t>(k)];
      s += e.w * (e.idx >= 0 ? vals[e.idx] : cuts[-1 - e.idx]);
    }
    return s;
  }

  void pack_rows() {
    const int64_t count = grid_->inside_count();
    const int n = grid_->n;
    const int r = rows_per_node();
    pk_off_.assign(static_cast<size_t>(count * r + 1), 0);
    pk_.clear();
    auto push = [&](const StencilRow& row) {
      for (const auto& [idx, w] : row.nodes) pk_.push_back({idx, w});
      for (const auto& [idx, w] : row.cuts) pk_.push_back({-1 - idx, w});
    };
    int64_t rid = 0;
    for (int64_t ii = 0; ii < count; ++ii) {
      for (int i = 0; i < n; ++i) {
        push(first_[static_cast<size_t>(i)][static_cast<size_t>(ii)]);
        pk_off_[static_cast<size_t>(++rid)] = static_cast<int64_t>(pk_.size());
      }
      for (int i = 0; i < n; ++i) {
        push(diag_[static_cast<size_t>(i)][static_cast<size_t>(ii)]);
        pk_off_[static_cast<size_t>(++rid)] = static_cast<int64_t>(pk_.size());
      }
      for (int p = 0; p < n * (n - 1) / 2; ++p) {
        push(mixed_[static_cast<size_t>(p)][static_cast<size_t>(ii)]);
        pk_off_[static_cast<size_t>(++rid)] = static_cast<int64_t>(pk_.size());
      }
    }
  }

  void build() {
    const Grid& g = *grid_;
    const int n = g.n;
    const int64_t count = g.inside_count();
    const double h = g.h;

    first_.assign(static_cast<size_t>(n), {});
    diag_.assign(static_cast<size_t>(n), {});
    for (int i = 0; i < n; ++i) {
      first_[static_cast<size_t>(i)].resize(static_cast<size_t>(count));
      diag_[static_cast<size_t>(i)].resize(static_cast<size_t>(count));
    }

    for (int64_t ii = 0; ii < count; ++ii) {
      for (int axis = 0; axis < n; ++axis) {
        const Grid::Link& lm = g.links[static_cast<size_t>(ii)][static_cast<size_t>(axis)][0];
        const Grid::Link& lp = g.links[static_cast<size_t>(ii)][static_cast<size_t>(axis)][1];
        const double hm = lm.neighbor >= 0 ? h : lm.theta * h;
        const double hp = lp.neighbor >= 0 ? h : lp.theta * h;

        // Non-uniform central first derivative (exact on quadratics).
        StencilRow& fr = first_[static_cast<size_t>(axis)][static_cast<size_t>(ii)];
        const double wm1 = -hp / (hm * (hm + hp));
        const double w01 = (hp - hm) / (hm * hp);
        const double wp1 = hm / (hp * (hm + hp));
        fr.nodes.emplace_back(ii, w01);
        if (lm.neighbor >= 0) fr.nodes.emplace_back(lm.neighbor, wm1);
        else fr.cuts.emplace_back(lm.cut, wm1);
        if (lp.neighbor >= 0) fr.nodes.emplace_back(lp.neighbor, wp1);
        else fr.cuts.emplace_back(lp.cut, wp1);

        // Shortley-Weller second derivative (exact on quadratics).
        StencilRow& dr = diag_[static_cast<size_t>(axis)][static_cast<size_t>(ii)];
        const double wm2 = 2.0 / (hm * (hm + hp));
        const double w02 = -2.0 / (hm * hp);
        const double wp2 = 2.0 / (hp * (hm + hp));
        dr.nodes.emplace_back(ii, w02);
        if (lm.neighbor >= 0) dr.nodes.emplace_back(lm.neighbor, wm2);
        else dr.cuts.emplace_back(lm.cut, wm2);
        if (lp.neighbor >= 0) dr.nodes.emplace_back(lp.neighbor, wp2);
        else dr.cuts.emplace_back(lp.cut, wp2);
      }
    }

    regular_.assign(static_cast<size_t>(count), 1);
    for (int64_t ii = 0; ii < count; ++ii)
      for (int axis = 0; axis < n; ++axis)
        for (int side = 0; side < 2; ++side)
          if (g.links[static_cast<size_t>(ii)][static_cast<size_t>(axis)][static_cast<size_t>(side)].neighbor < 0)
            regular_[static_cast<size_t>(ii)] = 0;

    // Mixed second derivatives.
    mixed_.assign(static_cast<size_t>(n * (n - 1) / 2), {});
    for (auto& v : mixed_) v.resize(static_cast<size_t>(count));
    for (int64_t ii = 0; ii < count; ++ii) {
      const int64_t f = g.flat_of[static_cast<size_t>(ii)];
      const auto idx = g.multi_index(f);
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          StencilRow& row = mixed_[static_cast<size_t>(pair_index(i, j))][static_cast<size_t>(ii)];
          // Preferred: the symmetric 4-point cross over diagonal
          // neighbors, available away from the boundary.
          int64_t diagn[2][2];
          bool all_inside = true;
          for (int si = 0; si < 2 && all_inside; ++si)
            for (int sj = 0; sj < 2 && all_inside; ++sj) {
              auto nb = idx;
              nb[static_cast<size_t>(i)] += (si == 0 ? -1 : 1);
              nb[static_cast<size_t>(j)] += (sj == 0 ? -1 : 1);
              bool ok = true;
              for (int k = 0; k < n; ++k)
                if (nb[static_cast<size_t>(k)] < 0 || nb[static_cast<size_t>(k)] >= g.dims[static_cast<size_t>(k)])
                  ok = false;
              const int64_t nbi = ok ? g.inside_of[static_cast<size_t>(g.flat_index(nb))] : -1;
              if (nbi < 0) all_inside = false;
              else diagn[si][sj] = nbi;
            }
          if (all_inside) {
            const double w = 1.0 / (4.0 * h * h);
            row.nodes.emplace_back(diagn[1][1], w);
            row.nodes.emplace_back(diagn[0][0], w);
            row.nodes.emplace_back(diagn[1][0], -w);
            row.nodes.emplace_back(diagn[0][1], -w);
            continue;
          }
          regular_[static_cast<size_t>(ii)] = 0;
          // Fall back to differencing the first-derivative rows of the
          // other axis along inside neighbors only (one-sided near the
          // boundary; cut points carry no derivative data).
          if (compose_mixed(row, ii, i, j)) continue;
          if (compose_mixed(row, ii, j, i)) continue;
          row.valid = false;  // degenerate sliver: both axes blocked
        }
      }
    }

    pack_rows();
  }

  // row = d/d x_outer of (first-derivative row in x_inner), using only
  // inside-node first-derivative rows along the outer axis.
  bool compose_mixed(StencilRow& row, int64_t ii, int outer, int inner) {
    const Grid& g = *grid_;
    const double h = g.h;
    const Grid::Link& lm = g.links[static_cast<size_t>(ii)][static_cast<size_t>(outer)][0];
    const Grid::Link& lp = g.links[static_cast<size_t>(ii)][static_cast<size_t>(outer)][1];
    std::vector<std::pair<int64_t, double>> terms;  // (inside node whose D1(inner) row is used, weight)
    if (lm.neighbor >= 0 && lp.neighbor >= 0) {
      terms = {{lm.neighbor, -1.0 / (2.0 * h)}, {lp.neighbor, 1.0 / (2.0 * h)}};
    } else if (lp.neighbor >= 0) {
      terms = {{ii, -1.0 / h}, {lp.neighbor, 1.0 / h}};
    } else if (lm.neighbor >= 0) {
      terms = {{lm.neighbor, -1.0 / h}, {ii, 1.0 / h}};
    } else {
      return false;
    }
    for (const auto& [src, w] : terms) {
      const StencilRow& inner_row = first_[static_cast<size_t>(inner)][static_cast<size_t>(src)];
      for (const auto& [idx, iw] : inner_row.nodes) row.nodes.emplace_back(idx, w * iw);
      for (const auto& [idx, iw] : inner_row.cuts) row.cuts.emplace_back(idx, w * iw);
    }
    return true;
  }

  const Grid* grid_;
  struct PackedEntry {
    int64_t idx;  // >= 0 inside node, < 0 encodes cut index -1-idx
    double w;
  };
  std::vector<int64_t> pk_off_;  // [node * rows_per_node + row]
  std::vector<PackedEntry> pk_;
  std::vector<std::vector<StencilRow>> first_;  // [axis][node]
  std::vector<std::vector<StencilRow>> diag_;   // [axis][node]
  std::vector<std::vector<StencilRow>> mixed_;  // [pair][node]
  std::vector<uint8_t> regular_;                // [node]
};

}  // namespace mingraph
