#pragma once

// Boundary data: the m analytic functions psi^1..psi^m on the closure of
// the domain, with evaluators for value/gradient/Hessian and cached
// sup-norms.  The last component psi^m = phi is the distinguished "large"
// component that the boundary-gradient constants control.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "mingraph/domain.hpp"
#include "mingraph/errors.hpp"
#include "mingraph/expr.hpp"
#include "mingraph/field.hpp"
#include "mingraph/smallmat.hpp"

namespace mingraph {

struct BoundaryComponent {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> grad;
  std::function<Mat(const Vec&)> hess;

  static BoundaryComponent from_expr(const Expr& e) {
    BoundaryComponent c;
    c.value = [e](const Vec& x) { return e.value(x); };
    c.grad = [e](const Vec& x) { return e.gradient(x); };
    c.hess = [e](const Vec& x) { return e.hessian(x); };
    return c;
  }
  static BoundaryComponent zero(int n) {
    BoundaryComponent c;
    c.value = [](const Vec&) { return 0.0; };
    c.grad = [n](const Vec&) { return Vec(n); };
    c.hess = [n](const Vec&) { return Mat(n, n); };
    return c;
  }
};

class BoundaryData {
 public:
  BoundaryData() = default;

  // Sup-norms are cached at construction by dense sampling of the closure
  // (lattice points of spacing sample_h inside the domain plus projected
  // boundary points), followed by two local refinement passes around each
  // sampled maximizer.  Cached values are declared upper bounds; a small
  // inflation absorbs the residual sampling bias.
  BoundaryData(const DomainSpec& spec, std::vector<BoundaryComponent> components,
               double sample_h = 0.0)
      : spec_(spec), comp_(std::move(components)) {
    if (comp_.empty()) throw Error("BadBoundaryData", "need at least one component");
    m_ = static_cast<int>(comp_.size());
    // Default sampling density backs off with dimension to keep the
    // closure scan affordable (the polish passes recover local accuracy).
    const double def = spec.diameter() / (spec.n == 2 ? 64.0 : spec.n == 3 ? 32.0 : 12.0);
    cache_sup_norms(sample_h > 0.0 ? sample_h : def);
  }

  int m() const { return m_; }
  int n() const { return spec_.n; }
  const DomainSpec& spec() const { return spec_; }

  double value(int alpha, const Vec& x) const { return comp_[static_cast<size_t>(alpha)].value(x); }
  Vec gradient(int alpha, const Vec& x) const { return comp_[static_cast<size_t>(alpha)].grad(x); }
  Mat hessian(int alpha, const Vec& x) const { return comp_[static_cast<size_t>(alpha)].hess(x); }

  // Cached sup-norms (upper bounds over the closure).
  double sup_grad(int alpha) const { return sup_grad_[static_cast<size_t>(alpha)]; }
  double sup_hess(int alpha) const { return sup_hess_[static_cast<size_t>(alpha)]; }
  double sup_grad_stacked() const { return sup_grad_stacked_; }
  double sup_hess_stacked() const { return sup_hess_stacked_; }
  double dphi0() const { return sup_grad_[static_cast<size_t>(m_ - 1)]; }
  double lambda_plus_phi() const { return lambda_plus_; }

  // Data with every component scaled by t (the continuity-method family).
  BoundaryData scaled(double t) const {
    BoundaryData out = *this;
    for (auto& c : out.comp_) {
      auto v = c.value;
      auto g = c.grad;
      auto h = c.hess;
      c.value = [v, t](const Vec& x) { return t * v(x); };
      c.grad = [g, t](const Vec& x) {
        Vec r = g(x);
        for (int i = 0; i < r.n; ++i) r[i] *= t;
        return r;
      };
      c.hess = [h, t](const Vec& x) {
        Mat r = h(x);
        for (int i = 0; i < r.rows; ++i)
          for (int j = 0; j < r.cols; ++j) r(i, j) *= t;
        return r;
      };
    }
    const double a = std::fabs(t);
    for (auto& s : out.sup_grad_) s *= a;
    for (auto& s : out.sup_hess_) s *= a;
    out.sup_grad_stacked_ *= a;
    out.sup_hess_stacked_ *= a;
    out.lambda_plus_ = t >= 0.0 ? t * out.lambda_plus_ : 0.0;  // recomputed below for t < 0
    if (t < 0.0) out.recompute_lambda_plus();
    return out;
  }

  // Samples the data onto a field: node values and cut-point values.
  VectorField sample(const Grid& grid) const {
    VectorField f(grid, m_);
    for (int64_t ii = 0; ii < grid.inside_count(); ++ii) {
      const Vec x = grid.point(grid.flat_of[static_cast<size_t>(ii)]);
      for (int a = 0; a < m_; ++a) f.at(ii, a) = value(a, x);
    }
    for (size_t k = 0; k < grid.cut_points.size(); ++k)
      for (int a = 0; a < m_; ++a)
        f.cut_at(static_cast<int64_t>(k), a) = value(a, grid.cut_points[k]);
    return f;
  }

  // Re-validates the cached sup-norms at a finer sampling; used by tests.
  double resample_sup_grad(int alpha, double sample_h) const {
    double best = 0.0;
    for_each_sample(sample_h, [&](const Vec& x) {
      best = std::max(best, comp_[static_cast<size_t>(alpha)].grad(x).norm());
    });
    return best;
  }

 private:
  void recompute_lambda_plus() {
    const double sh = spec_.diameter() / (spec_.n == 2 ? 64.0 : spec_.n == 3 ? 32.0 : 12.0);
    auto lam_max = [&](const Vec& x) {
      return jacobi_eigensym(comp_[static_cast<size_t>(m_ - 1)].hess(x)).values[0];
    };
    double lp = 0.0;
    Vec at(spec_.n);
    for_each_sample(sh, [&](const Vec& x) {
      const double v = lam_max(x);
      if (v > lp) {
        lp = v;
        at = x;
      }
    });
    lp = std::max(lp, hill_climb(at, sh, lam_max));
    lambda_plus_ = std::max(0.0, lp);
  }

  template <typename Fn>
  void for_each_sample(double sh, Fn&& fn) const {
    Vec lo, hi;
    spec_.bounding_box(lo, hi);
    const int n = spec_.n;
    std::array<int64_t, kMaxDim> dims{};
    int64_t total = 1;
    for (int i = 0; i < n; ++i) {
      dims[static_cast<size_t>(i)] = static_cast<int64_t>(std::floor((hi[i] - lo[i]) / sh)) + 1;
      total *= dims[static_cast<size_t>(i)];
    }
    const double scale = std::max(1.0, spec_.diameter());
    for (int64_t f = 0; f < total; ++f) {
      int64_t rem = f;
      Vec x(n);
      for (int i = n - 1; i >= 0; --i) {
        x[i] = lo[i] + sh * static_cast<double>(rem % dims[static_cast<size_t>(i)]);
        rem /= dims[static_cast<size_t>(i)];
      }
      const double lv = spec_.level(x);
      if (lv < 0.0) {
        fn(x);
      } else {
        // Keep near-boundary outside samples by projecting them onto the
        // boundary, so the supremum really covers the closure.
        const double gn = std::max(spec_.level_grad(x, 1e-6 * scale).norm(), 1e-8);
        if (lv / gn <= sh) {
          const auto q = detail::project_to_boundary(spec_, x, scale);
          if (q) fn(*q);
        }
      }
    }
  }

  // Pulls a candidate point into the closure: inside points pass through,
  // outside points are projected onto the boundary.
  bool to_closure(Vec& x) const {
    if (spec_.level(x) < 0.0) return true;
    const auto q = detail::project_to_boundary(spec_, x, std::max(1.0, spec_.diameter()));
    if (!q) return false;
    x = *q;
    return true;
  }

  // Compass search on the closure: axis moves with a shrinking step, each
  // candidate projected onto the closure first.  Returns the refined
  // maximum of obj starting from seed.
  template <typename Obj>
  double hill_climb(Vec seed, double step, Obj&& obj) const {
    const int n = spec_.n;
    const double floor_step = 1e-7 * std::max(1.0, spec_.diameter());
    double best = obj(seed);
    while (step > floor_step) {
      bool moved = false;
      for (int i = 0; i < n; ++i) {
        for (int s = -1; s <= 1; s += 2) {
          Vec x = seed;
          x[i] += s * step;
          if (!to_closure(x)) continue;
          const double v = obj(x);
          if (v > best) {
            best = v;
            seed = x;
            moved = true;
          }
        }
      }
      if (!moved) step *= 0.5;
    }
    return best;
  }

  void cache_sup_norms(double sh) {
    const int n = spec_.n;
    sup_grad_.assign(static_cast<size_t>(m_), 0.0);
    sup_hess_.assign(static_cast<size_t>(m_), 0.0);
    sup_grad_stacked_ = 0.0;
    sup_hess_stacked_ = 0.0;
    lambda_plus_ = 0.0;

    std::vector<Vec> best_grad_at(static_cast<size_t>(m_), Vec(n));
    std::vector<Vec> best_hess_at(static_cast<size_t>(m_), Vec(n));
    Vec best_gs_at(n), best_hs_at(n), best_lp_at(n);

    auto grad_norm = [&](int a, const Vec& x) { return comp_[static_cast<size_t>(a)].grad(x).norm(); };
    auto hess_norm = [&](int a, const Vec& x) {
      const Mat h = comp_[static_cast<size_t>(a)].hess(x);
      double hf = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) hf += h(i, j) * h(i, j);
      return std::sqrt(hf);
    };
    auto stacked_grad = [&](const Vec& x) {
      double s = 0.0;
      for (int a = 0; a < m_; ++a) s += grad_norm(a, x) * grad_norm(a, x);
      return std::sqrt(s);
    };
    auto stacked_hess = [&](const Vec& x) {
      double s = 0.0;
      for (int a = 0; a < m_; ++a) s += hess_norm(a, x) * hess_norm(a, x);
      return std::sqrt(s);
    };
    auto lam_max = [&](const Vec& x) {
      return jacobi_eigensym(comp_[static_cast<size_t>(m_ - 1)].hess(x)).values[0];
    };

    auto visit = [&](const Vec& x) {
      for (int a = 0; a < m_; ++a) {
        const double gn = grad_norm(a, x);
        const double hf = hess_norm(a, x);
        if (gn > sup_grad_[static_cast<size_t>(a)]) {
          sup_grad_[static_cast<size_t>(a)] = gn;
          best_grad_at[static_cast<size_t>(a)] = x;
        }
        if (hf > sup_hess_[static_cast<size_t>(a)]) {
          sup_hess_[static_cast<size_t>(a)] = hf;
          best_hess_at[static_cast<size_t>(a)] = x;
        }
      }
      const double gs = stacked_grad(x);
      const double hs = stacked_hess(x);
      if (gs > sup_grad_stacked_) {
        sup_grad_stacked_ = gs;
        best_gs_at = x;
      }
      if (hs > sup_hess_stacked_) {
        sup_hess_stacked_ = hs;
        best_hs_at = x;
      }
      const double lp = lam_max(x);
      if (lp > lambda_plus_) {
        lambda_plus_ = lp;
        best_lp_at = x;
      }
    };

    for_each_sample(sh, visit);

    // Polish each cached maximum with a compass search from its sampled
    // maximizer; the lattice localizes the right basin, the climb removes
    // the sampling bias.
    for (int a = 0; a < m_; ++a) {
      sup_grad_[static_cast<size_t>(a)] =
          std::max(sup_grad_[static_cast<size_t>(a)],
                   hill_climb(best_grad_at[static_cast<size_t>(a)], sh,
                              [&](const Vec& x) { return grad_norm(a, x); }));
      sup_hess_[static_cast<size_t>(a)] =
          std::max(sup_hess_[static_cast<size_t>(a)],
                   hill_climb(best_hess_at[static_cast<size_t>(a)], sh,
                              [&](const Vec& x) { return hess_norm(a, x); }));
    }
    sup_grad_stacked_ = std::max(sup_grad_stacked_, hill_climb(best_gs_at, sh, stacked_grad));
    sup_hess_stacked_ = std::max(sup_hess_stacked_, hill_climb(best_hs_at, sh, stacked_hess));
    lambda_plus_ = std::max(lambda_plus_, hill_climb(best_lp_at, sh, lam_max));

    lambda_plus_ = std::max(0.0, lambda_plus_);
    // Declared upper bounds: inflate relatively by a hair to absorb
    // round-off in the sampling (identically-zero data keeps exact zeros,
    // which the band constants rely on).
    const double inflate = 1.0 + 1e-9;
    for (int a = 0; a < m_; ++a) {
      sup_grad_[static_cast<size_t>(a)] *= inflate;
      sup_hess_[static_cast<size_t>(a)] *= inflate;
    }
    sup_grad_stacked_ *= inflate;
    sup_hess_stacked_ *= inflate;
  }

  DomainSpec spec_;
  std::vector<BoundaryComponent> comp_;
  int m_ = 0;
  std::vector<double> sup_grad_, sup_hess_;
  double sup_grad_stacked_ = 0.0, sup_hess_stacked_ = 0.0;
  double lambda_plus_ = 0.0;
};

// Convenience: build boundary data from expression strings; empty strings
// mean the zero function.
inline BoundaryData boundary_from_exprs(const DomainSpec& spec,
                                        const std::vector<std::string>& exprs,
                                        double sample_h = 0.0) {
  std::vector<BoundaryComponent> comps;
  comps.reserve(exprs.size());
  for (const auto& s : exprs) {
    if (s.empty()) comps.push_back(BoundaryComponent::zero(spec.n));
    else comps.push_back(BoundaryComponent::from_expr(Expr(s, spec.n)));
  }
  return BoundaryData(spec, std::move(comps), sample_h);
}

}  // namespace mingraph
