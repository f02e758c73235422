#pragma once

// Base-domain geometry: analytic level-set domains, their Cartesian
// discretization with Shortley-Weller cut distances, and the signed
// distance field with the derived quantities the solvability constants
// consume (lambda_-(d), r_Omega, diameter, mean convexity of the offset
// boundaries).

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mingraph/errors.hpp"
#include "mingraph/expr.hpp"
#include "mingraph/parallel.hpp"
#include "mingraph/smallmat.hpp"

namespace mingraph {

enum class DomainKind { kBall, kRoundedBox, kEllipsoid, kCatenoidNeck, kCustomLevelSet };

inline const char* to_string(DomainKind k) {
  switch (k) {
    case DomainKind::kBall: return "ball";
    case DomainKind::kRoundedBox: return "rounded-box";
    case DomainKind::kEllipsoid: return "ellipsoid";
    case DomainKind::kCatenoidNeck: return "catenoid-neck";
    case DomainKind::kCustomLevelSet: return "custom-level-set";
  }
  return "?";
}

// Analytic description of the base domain Omega, as a level set that is
// negative inside, zero on the boundary, positive outside.  Construct via
// the static factories, which validate parameters (a sharp box, for
// instance, is rejected: the boundary must be C^2 up to curvature jumps).
struct DomainSpec {
  DomainKind kind = DomainKind::kBall;
  int n = 2;                    // base dimension, 2..4
  std::vector<double> params;   // lengths, meaning depends on kind

  // Only for custom level sets (the closed-form kinds know these exactly).
  Expr custom_level_set;
  double custom_diameter = 0.0;
  double custom_r_omega = 0.0;  // 0 means "unknown, assume finite 0" -- callers see it verbatim
  bool custom_convex = false;

  static DomainSpec ball(int n, double radius) {
    check_dim(n);
    if (!(radius > 0.0)) throw Error("BadDomainParams", "ball radius must be positive");
    DomainSpec s;
    s.kind = DomainKind::kBall;
    s.n = n;
    s.params = {radius};
    return s;
  }

  // Half-widths per axis plus a corner radius r in (0, min half-width].
  static DomainSpec rounded_box(int n, std::vector<double> half_widths, double corner_radius) {
    check_dim(n);
    if (static_cast<int>(half_widths.size()) != n)
      throw Error("BadDomainParams", "rounded box needs one half-width per axis");
    double amin = std::numeric_limits<double>::infinity();
    for (double a : half_widths) {
      if (!(a > 0.0)) throw Error("BadDomainParams", "half-widths must be positive");
      amin = std::min(amin, a);
    }
    if (!(corner_radius > 0.0))
      throw Error("BadDomainParams", "a sharp box is rejected: corner radius must be positive");
    if (corner_radius > amin)
      throw Error("BadDomainParams", "corner radius exceeds the smallest half-width");
    DomainSpec s;
    s.kind = DomainKind::kRoundedBox;
    s.n = n;
    s.params = std::move(half_widths);
    s.params.push_back(corner_radius);
    return s;
  }

  static DomainSpec ellipsoid(int n, std::vector<double> semi_axes) {
    check_dim(n);
    if (static_cast<int>(semi_axes.size()) != n)
      throw Error("BadDomainParams", "ellipsoid needs one semi-axis per axis");
    for (double a : semi_axes)
      if (!(a > 0.0)) throw Error("BadDomainParams", "semi-axes must be positive");
    DomainSpec s;
    s.kind = DomainKind::kEllipsoid;
    s.n = n;
    s.params = std::move(semi_axes);
    return s;
  }

  // Two spherical caps of radius cap_radius joined by an exact catenoid
  // neck of waist c, revolved about the x1 axis.  Mean convex but not
  // convex; the whole neck piece has zero mean curvature.  Requires n >= 3
  // (in the plane the "neck" profile is not mean convex).
  static DomainSpec catenoid_neck(int n, double c, double cap_radius) {
    check_dim(n);
    if (n < 3) throw Error("BadDomainParams", "catenoid-neck requires n >= 3");
    if (!(c > 0.0) || !(cap_radius >= c))
      throw Error("BadDomainParams", "need 0 < waist <= cap radius");
    DomainSpec s;
    s.kind = DomainKind::kCatenoidNeck;
    s.n = n;
    s.params = {c, cap_radius};
    return s;
  }

  static DomainSpec custom(int n, const std::string& level_set_expr, double diameter,
                           double r_omega, bool convex) {
    check_dim(n);
    if (!(diameter > 0.0)) throw Error("BadDomainParams", "custom domain needs a positive diameter");
    DomainSpec s;
    s.kind = DomainKind::kCustomLevelSet;
    s.n = n;
    s.custom_level_set = Expr(level_set_expr, n);
    s.custom_diameter = diameter;
    s.custom_r_omega = r_omega;
    s.custom_convex = convex;
    return s;
  }

  // ---- level set -------------------------------------------------------

  double level(const Vec& x) const {
    switch (kind) {
      case DomainKind::kBall:
        return x.norm() - params[0];
      case DomainKind::kRoundedBox: {
        const double r = params[static_cast<size_t>(n)];
        double out2 = 0.0, inner = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
          const double q = std::fabs(x[i]) - (params[static_cast<size_t>(i)] - r);
          out2 += std::max(q, 0.0) * std::max(q, 0.0);
          inner = std::max(inner, q);
        }
        return std::sqrt(out2) + std::min(inner, 0.0) - r;
      }
      case DomainKind::kEllipsoid: {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
          const double t = x[i] / params[static_cast<size_t>(i)];
          s += t * t;
        }
        // Scale so the gradient is O(1) near the boundary.
        return (std::sqrt(s) - 1.0) * min_param();
      }
      case DomainKind::kCatenoidNeck: {
        const NeckGeometry g = neck_geometry();
        const double t = std::fabs(x[0]);
        double rho2 = 0.0;
        for (int i = 1; i < n; ++i) rho2 += x[i] * x[i];
        const double profile2 = (t <= g.t_join)
                                    ? g.c * g.c * std::cosh(t / g.c) * std::cosh(t / g.c)
                                    : g.cap_r * g.cap_r - (t - g.t_center) * (t - g.t_center);
        return rho2 - profile2;
      }
      case DomainKind::kCustomLevelSet:
        return custom_level_set.value(x);
    }
    throw Error("BadDomainParams", "corrupt domain kind");
  }

  // Central-difference gradient of the level set.  The bisection that
  // places cut points uses only level() values; this gradient only steers
  // Newton projection and curvature sampling, where O(step^2) error is ample.
  Vec level_grad(const Vec& x, double step) const {
    Vec g(n);
    Vec p = x;
    for (int i = 0; i < n; ++i) {
      p[i] = x[i] + step;
      const double fp = level(p);
      p[i] = x[i] - step;
      const double fm = level(p);
      p[i] = x[i];
      g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
  }

  // ---- closed-form geometry -------------------------------------------

  double diameter() const {
    switch (kind) {
      case DomainKind::kBall: return 2.0 * params[0];
      case DomainKind::kRoundedBox: {
        const double r = params[static_cast<size_t>(n)];
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
          const double a = params[static_cast<size_t>(i)] - r;
          s += a * a;
        }
        return 2.0 * (std::sqrt(s) + r);
      }
      case DomainKind::kEllipsoid: {
        double amax = 0.0;
        for (int i = 0; i < n; ++i) amax = std::max(amax, params[static_cast<size_t>(i)]);
        return 2.0 * amax;
      }
      case DomainKind::kCatenoidNeck: {
        const NeckGeometry g = neck_geometry();
        return 2.0 * (g.t_center + g.cap_r);  // pole-to-pole
      }
      case DomainKind::kCustomLevelSet: return custom_diameter;
    }
    throw Error("BadDomainParams", "corrupt domain kind");
  }

  bool convex() const {
    switch (kind) {
      case DomainKind::kBall:
      case DomainKind::kRoundedBox:
      case DomainKind::kEllipsoid: return true;
      case DomainKind::kCatenoidNeck: return false;
      case DomainKind::kCustomLevelSet: return custom_convex;
    }
    return false;
  }

  // Uniform exterior ball radius; +infinity for convex domains.
  double exterior_ball_radius() const {
    switch (kind) {
      case DomainKind::kBall:
      case DomainKind::kRoundedBox:
      case DomainKind::kEllipsoid: return std::numeric_limits<double>::infinity();
      case DomainKind::kCatenoidNeck:
        // The binding obstruction is the meridian curvature 1/c at the
        // neck equator: exterior balls of radius up to the waist c fit.
        return params[0];
      case DomainKind::kCustomLevelSet:
        return custom_convex ? std::numeric_limits<double>::infinity() : custom_r_omega;
    }
    return 0.0;
  }

  void bounding_box(Vec& lo, Vec& hi) const {
    lo = Vec(n);
    hi = Vec(n);
    switch (kind) {
      case DomainKind::kBall:
        for (int i = 0; i < n; ++i) { lo[i] = -params[0]; hi[i] = params[0]; }
        return;
      case DomainKind::kRoundedBox:
      case DomainKind::kEllipsoid:
        for (int i = 0; i < n; ++i) {
          lo[i] = -params[static_cast<size_t>(i)];
          hi[i] = params[static_cast<size_t>(i)];
        }
        return;
      case DomainKind::kCatenoidNeck: {
        const NeckGeometry g = neck_geometry();
        lo[0] = -(g.t_center + g.cap_r);
        hi[0] = g.t_center + g.cap_r;
        for (int i = 1; i < n; ++i) { lo[i] = -g.cap_r; hi[i] = g.cap_r; }
        return;
      }
      case DomainKind::kCustomLevelSet: {
        const double r = 0.75 * custom_diameter;  // generous: diameter/2 around the origin
        for (int i = 0; i < n; ++i) { lo[i] = -r; hi[i] = r; }
        return;
      }
    }
  }

  struct NeckGeometry {
    double c;         // waist radius
    double cap_r;     // spherical cap radius
    double t_join;    // |x1| where the catenoid hands over to the cap
    double t_center;  // cap sphere center on the axis
  };

  NeckGeometry neck_geometry() const {
    NeckGeometry g{};
    g.c = params[0];
    g.cap_r = params[1];
    // Cap radius R and the catenoid profile p(t) = c cosh(t/c) satisfy
    // R = c cosh^2(t_join/c) at the C^1 join (value and slope matched by a
    // sphere centered on the axis), so cosh(t_join/c) = sqrt(R/c).
    const double ch = std::sqrt(g.cap_r / g.c);
    g.t_join = g.c * std::acosh(std::max(1.0, ch));
    const double p = g.c * ch;                        // profile at the join
    const double dp = std::sinh(g.t_join / g.c);      // slope at the join
    g.t_center = g.t_join + p * dp;
    return g;
  }

 private:
  static void check_dim(int n) {
    if (n < 2 || n > kMaxDim)
      throw Error("BadDomainParams", "dimension must be in [2, " + std::to_string(kMaxDim) + "]");
  }
  double min_param() const {
    double m = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) m = std::min(m, params[static_cast<size_t>(i)]);
    return m;
  }
};

// Node classification.  "Inside" nodes (interior + boundary-adjacent) are
// the unknowns; boundary-adjacent nodes carry cut distances to the exact
// boundary along each axis (Shortley-Weller convention: Dirichlet data
// lives on the boundary itself, not on grid nodes).
enum class NodeClass : uint8_t { kInterior = 0, kBoundaryAdjacent = 1, kExterior = 2 };

struct Grid {
  int n = 0;
  double h = 0.0;
  Vec origin;                       // coordinates of node index (0,...,0)
  std::array<int, kMaxDim> dims{};  // nodes per axis

  std::vector<NodeClass> cls;       // per flat node, row-major
  std::vector<int64_t> inside_of;   // flat node -> inside index, or -1
  std::vector<int64_t> flat_of;     // inside index -> flat node

  // Per inside node and axis/side: inside index of the axis neighbor, or
  // -1 when the neighbor is exterior; then cut[] holds the cut-point id.
  // theta is the cut distance as a fraction of h, in (0, 1].
  struct Link {
    int64_t neighbor = -1;
    int64_t cut = -1;
    double theta = 1.0;
  };
  std::vector<std::array<std::array<Link, 2>, kMaxDim>> links;  // [inside][axis][side]

  std::vector<Vec> cut_points;  // coordinates of cut points on the boundary

  int64_t total_nodes() const {
    int64_t t = 1;
    for (int i = 0; i < n; ++i) t *= dims[static_cast<size_t>(i)];
    return t;
  }
  int64_t inside_count() const { return static_cast<int64_t>(flat_of.size()); }

  int64_t flat_index(const std::array<int64_t, kMaxDim>& idx) const {
    int64_t f = 0;
    for (int i = 0; i < n; ++i) f = f * dims[static_cast<size_t>(i)] + idx[static_cast<size_t>(i)];
    return f;
  }
  std::array<int64_t, kMaxDim> multi_index(int64_t flat) const {
    std::array<int64_t, kMaxDim> idx{};
    for (int i = n - 1; i >= 0; --i) {
      idx[static_cast<size_t>(i)] = flat % dims[static_cast<size_t>(i)];
      flat /= dims[static_cast<size_t>(i)];
    }
    return idx;
  }
  Vec point(int64_t flat) const {
    const auto idx = multi_index(flat);
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = origin[i] + h * static_cast<double>(idx[static_cast<size_t>(i)]);
    return x;
  }
};

// Classifies the bounding-box lattice against the level set and computes
// cut distances by bisection to 1e-10 relative tolerance.
inline Grid build_grid(const DomainSpec& spec, double h, int threads = 0) {
  const double l = spec.diameter();
  if (!(h > 0.0)) throw Error("TooCoarse", "grid spacing must be positive");
  if (!(h < l / 8.0))
    throw Error("TooCoarse", "grid spacing must be below diameter/8 (= " + std::to_string(l / 8.0) + ")");
  if (threads <= 0) threads = default_threads();

  Grid g;
  g.n = spec.n;
  g.h = h;
  Vec lo, hi;
  spec.bounding_box(lo, hi);
  g.origin = Vec(spec.n);
  for (int i = 0; i < spec.n; ++i) {
    g.origin[i] = lo[i] - 2.0 * h;
    const double span = (hi[i] + 2.0 * h) - g.origin[i];
    g.dims[static_cast<size_t>(i)] = static_cast<int>(std::ceil(span / h)) + 1;
  }

  const int64_t total = g.total_nodes();
  g.cls.assign(static_cast<size_t>(total), NodeClass::kExterior);
  g.inside_of.assign(static_cast<size_t>(total), -1);

  // Pass 1: inside/outside by level-set sign (strictly negative = inside).
  std::vector<uint8_t> inside(static_cast<size_t>(total), 0);
  parallel_for(total, threads, [&](int64_t b, int64_t e) {
    for (int64_t f = b; f < e; ++f)
      if (spec.level(g.point(f)) < 0.0) inside[static_cast<size_t>(f)] = 1;
  });

  // Pass 2: classify and enumerate inside nodes (deterministic order).
  for (int64_t f = 0; f < total; ++f) {
    if (!inside[static_cast<size_t>(f)]) continue;
    const auto idx = g.multi_index(f);
    bool adjacent = false;
    for (int axis = 0; axis < g.n && !adjacent; ++axis) {
      for (int side = 0; side < 2 && !adjacent; ++side) {
        auto nb = idx;
        nb[static_cast<size_t>(axis)] += (side == 0 ? -1 : 1);
        const int64_t v = nb[static_cast<size_t>(axis)];
        if (v < 0 || v >= g.dims[static_cast<size_t>(axis)] ||
            !inside[static_cast<size_t>(g.flat_index(nb))])
          adjacent = true;
      }
    }
    g.cls[static_cast<size_t>(f)] = adjacent ? NodeClass::kBoundaryAdjacent : NodeClass::kInterior;
    g.inside_of[static_cast<size_t>(f)] = static_cast<int64_t>(g.flat_of.size());
    g.flat_of.push_back(f);
  }

  if (g.flat_of.empty()) throw Error("EmptyDomain", "no interior node at this spacing");

  // Require a minimally resolved domain: at least 5 inside nodes per axis
  // somewhere in the grid.
  for (int axis = 0; axis < g.n; ++axis) {
    // Longest run of inside nodes along any lattice line in this axis.
    int64_t best = 0;
    std::vector<int64_t> run(static_cast<size_t>(total / g.dims[static_cast<size_t>(axis)]), 0);
    std::vector<int64_t> cur(run.size(), 0);
    for (int64_t f = 0; f < total; ++f) {
      const auto mi = g.multi_index(f);
      int64_t line = 0;
      for (int i = 0; i < g.n; ++i)
        if (i != axis) line = line * g.dims[static_cast<size_t>(i)] + mi[static_cast<size_t>(i)];
      if (inside[static_cast<size_t>(f)]) {
        cur[static_cast<size_t>(line)]++;
        run[static_cast<size_t>(line)] = std::max(run[static_cast<size_t>(line)], cur[static_cast<size_t>(line)]);
      } else {
        cur[static_cast<size_t>(line)] = 0;
      }
    }
    for (int64_t r : run) best = std::max(best, r);
    if (best < 5)
      throw Error("TooCoarse", "fewer than 5 interior nodes along axis " + std::to_string(axis));
  }

  // Pass 3: neighbor links and cut distances.
  g.links.assign(static_cast<size_t>(g.inside_count()), {});
  for (int64_t ii = 0; ii < g.inside_count(); ++ii) {
    const int64_t f = g.flat_of[static_cast<size_t>(ii)];
    const auto idx = g.multi_index(f);
    const Vec x = g.point(f);
    for (int axis = 0; axis < g.n; ++axis) {
      for (int side = 0; side < 2; ++side) {
        auto nb = idx;
        nb[static_cast<size_t>(axis)] += (side == 0 ? -1 : 1);
        const int64_t v = nb[static_cast<size_t>(axis)];
        Grid::Link& link = g.links[static_cast<size_t>(ii)][static_cast<size_t>(axis)][static_cast<size_t>(side)];
        const bool nb_inside = v >= 0 && v < g.dims[static_cast<size_t>(axis)] &&
                               inside[static_cast<size_t>(g.flat_index(nb))];
        if (nb_inside) {
          link.neighbor = g.inside_of[static_cast<size_t>(g.flat_index(nb))];
          continue;
        }
        // Bisection for the cut point between x (level < 0) and the
        // exterior neighbor (level >= 0).
        const double dir = (side == 0 ? -1.0 : 1.0);
        double a = 0.0, b = h;
        Vec p = x;
        p[axis] = x[axis] + dir * b;
        double fb = spec.level(p);
        if (fb <= 0.0) {
          // The classification and this re-evaluation of the neighbor
          // coordinate can disagree by one ulp when the boundary grazes a
          // lattice point; anything beyond that means the bounding box
          // truly misses the domain.
          if (fb < -1e-12 * std::max(1.0, l))
            throw Error("EmptyDomain", "bounding box does not contain the domain");
          fb = 0.0;
          a = b;  // the neighbor itself sits on the boundary
        }
        for (int it = 0; it < 60 && fb > 0.0; ++it) {
          const double m = 0.5 * (a + b);
          p[axis] = x[axis] + dir * m;
          const double fm = spec.level(p);
          if (fm < 0.0) a = m; else b = m;
          if ((b - a) <= 1e-10 * h) break;
        }
        const double s = 0.5 * (a + b);
        // Clamp grazing cuts away from zero: a cut fraction below 1e-2
        // perturbs the boundary by at most h/100 but keeps the one-sided
        // stencil weights bounded.
        link.theta = std::min(1.0, std::max(s / h, 1e-2));
        p[axis] = x[axis] + dir * (link.theta * h);
        link.cut = static_cast<int64_t>(g.cut_points.size());
        g.cut_points.push_back(p);
      }
    }
  }

  return g;
}

// Signed distance data on (a band of) the grid.
struct DistanceField {
  double band = 0.0;               // requested band width
  double attempt_limit = 0.0;      // projection attempted below this estimated distance
  std::vector<double> d;           // per inside node: distance to the boundary (>= 0)
  std::vector<uint8_t> attempted;  // per inside node: projection attempted
  std::vector<uint8_t> projected;  // per inside node: closest-point iteration converged
  std::vector<Vec> grad;           // Dd, valid where projected
  std::vector<uint8_t> in_band;    // d <= band and projected
  std::vector<Mat> hess;           // Hess d by central differences of Dd (band nodes)
  std::vector<uint8_t> hess_ok;    // all stencil neighbors had gradients
  std::vector<double> lambda_min;  // smallest eigenvalue of Hess d (band nodes with hess_ok)
  std::vector<double> laplacian;   // trace of Hess d (band nodes with hess_ok)
  std::vector<double> boundary_H;  // mean curvature at sampled boundary points (cut points)
};

namespace detail {

// Closest-point projection onto the zero level set: alternate a Newton
// step along the level-set gradient with a tangential slide toward the
// query point.  Returns nullopt if 50 iterations do not converge.
inline std::optional<Vec> project_to_boundary(const DomainSpec& spec, const Vec& x, double scale) {
  const double grad_step = 1e-6 * scale;
  const double tol = 1e-12 * scale;
  Vec q = x;
  for (int it = 0; it < 50; ++it) {
    double move = 0.0;
    // Newton step onto the level set.
    for (int sub = 0; sub < 3; ++sub) {
      const double f = spec.level(q);
      const Vec gr = spec.level_grad(q, grad_step);
      const double g2 = gr.norm2();
      if (g2 <= 0.0) return std::nullopt;
      const double step = f / g2;
      for (int i = 0; i < q.n; ++i) q[i] -= step * gr[i];
      move += std::fabs(step) * std::sqrt(g2);
      if (std::fabs(f) < tol) break;
    }
    // Tangential slide toward x.
    const Vec gr = spec.level_grad(q, grad_step);
    const double gn = gr.norm();
    if (gn <= 0.0) return std::nullopt;
    double dot = 0.0;
    for (int i = 0; i < q.n; ++i) dot += (x[i] - q[i]) * gr[i] / gn;
    double slide = 0.0;
    for (int i = 0; i < q.n; ++i) {
      const double t = (x[i] - q[i]) - dot * gr[i] / gn;
      q[i] += t;
      slide += t * t;
    }
    move += std::sqrt(slide);
    if (move < 1e-11 * scale) {
      // Polish once more onto the level set and accept.
      const double f = spec.level(q);
      const Vec gr2 = spec.level_grad(q, grad_step);
      const double g2 = gr2.norm2();
      if (g2 > 0.0) {
        const double step = f / g2;
        for (int i = 0; i < q.n; ++i) q[i] -= step * gr2[i];
      }
      return q;
    }
  }
  return std::nullopt;
}

// Mean curvature of the level set at a boundary point, by second-order
// finite differences of the level-set function:
//   H = (|Dphi|^2 tr(Hphi) - Dphi^T Hphi Dphi) / |Dphi|^3.
// Positive for a ball (our mean-convex sign).
inline double boundary_mean_curvature(const DomainSpec& spec, const Vec& q, double scale) {
  const int n = spec.n;
  const double s = 1e-4 * scale;
  Vec g(n);
  Mat hmat(n, n);
  Vec p = q;
  const double f0 = spec.level(q);
  for (int i = 0; i < n; ++i) {
    p[i] = q[i] + s;
    const double fp = spec.level(p);
    p[i] = q[i] - s;
    const double fm = spec.level(p);
    p[i] = q[i];
    g[i] = (fp - fm) / (2.0 * s);
    hmat(i, i) = (fp - 2.0 * f0 + fm) / (s * s);
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      p[i] = q[i] + s; p[j] = q[j] + s; const double fpp = spec.level(p);
      p[j] = q[j] - s; const double fpm = spec.level(p);
      p[i] = q[i] - s; const double fmm = spec.level(p);
      p[j] = q[j] + s; const double fmp = spec.level(p);
      p[i] = q[i]; p[j] = q[j];
      const double v = (fpp - fpm - fmp + fmm) / (4.0 * s * s);
      hmat(i, j) = v;
      hmat(j, i) = v;
    }
  const double gn = g.norm();
  if (gn <= 0.0) return 0.0;
  double quad = 0.0, tr = 0.0;
  for (int i = 0; i < n; ++i) {
    tr += hmat(i, i);
    for (int j = 0; j < n; ++j) quad += g[i] * hmat(i, j) * g[j];
  }
  return (gn * gn * tr - quad) / (gn * gn * gn);
}

}  // namespace detail

// Builds the signed distance field by closest-point projection.  Distances
// and gradients are attempted at every inside node; full accuracy (and the
// Hessian data) is only promised on the near-boundary band, which is where
// the solvability constants read them.  ProjectionFailure is raised only
// when a band node fails to project.
inline DistanceField distance_field(const DomainSpec& spec, const Grid& grid, double band,
                                    int threads = 0) {
  if (threads <= 0) threads = default_threads();
  const double scale = std::max(1.0, spec.diameter());
  const int64_t count = grid.inside_count();

  DistanceField df;
  df.band = band;
  // Projection is only attempted where the result can matter: everything
  // the band (plus stencil halo) can reach.  Deep-interior nodes keep a
  // first-order level-set estimate of d instead.
  df.attempt_limit = 2.0 * band + 4.0 * grid.h;
  df.d.assign(static_cast<size_t>(count), 0.0);
  df.attempted.assign(static_cast<size_t>(count), 0);
  df.projected.assign(static_cast<size_t>(count), 0);
  df.grad.assign(static_cast<size_t>(count), Vec(grid.n));
  df.in_band.assign(static_cast<size_t>(count), 0);

  parallel_for(count, threads, [&](int64_t b, int64_t e) {
    for (int64_t ii = b; ii < e; ++ii) {
      const Vec x = grid.point(grid.flat_of[static_cast<size_t>(ii)]);
      const double lv = std::fabs(spec.level(x));
      const double gn = std::max(spec.level_grad(x, 1e-6 * scale).norm(), 1e-8);
      df.d[static_cast<size_t>(ii)] = lv / gn;  // placeholder estimate
      if (lv / gn > df.attempt_limit) continue;
      df.attempted[static_cast<size_t>(ii)] = 1;
      const auto q = detail::project_to_boundary(spec, x, scale);
      if (!q) continue;
      double dist = 0.0;
      for (int i = 0; i < grid.n; ++i) dist += (x[i] - q->operator[](i)) * (x[i] - q->operator[](i));
      dist = std::sqrt(dist);
      df.d[static_cast<size_t>(ii)] = dist;
      df.projected[static_cast<size_t>(ii)] = 1;
      Vec g(grid.n);
      if (dist > 1e-14 * scale) {
        for (int i = 0; i < grid.n; ++i) g[i] = (x[i] - q->operator[](i)) / dist;
      } else {
        // On-boundary node (cannot happen for strictly inside nodes, but
        // keep the direction meaningful): inward level-set normal.
        g = spec.level_grad(x, 1e-6 * scale);
        const double gn = g.norm();
        for (int i = 0; i < grid.n; ++i) g[i] = gn > 0 ? -g[i] / gn : 0.0;
      }
      df.grad[static_cast<size_t>(ii)] = g;
    }
  });

  for (int64_t ii = 0; ii < count; ++ii) {
    if (df.projected[static_cast<size_t>(ii)] && df.d[static_cast<size_t>(ii)] <= band)
      df.in_band[static_cast<size_t>(ii)] = 1;
    else if (df.attempted[static_cast<size_t>(ii)] && !df.projected[static_cast<size_t>(ii)] &&
             df.d[static_cast<size_t>(ii)] <= band)
      throw Error("ProjectionFailure",
                  "closest-point iteration did not converge at a band node");
  }

  // Hessian of d by central differences of Dd on the axis neighbors; valid
  // where all 2n neighbors carry gradients.  At boundary-adjacent nodes a
  // one-sided difference toward the interior is used.
  df.hess.assign(static_cast<size_t>(count), Mat(grid.n, grid.n));
  df.hess_ok.assign(static_cast<size_t>(count), 0);
  df.lambda_min.assign(static_cast<size_t>(count), 0.0);
  df.laplacian.assign(static_cast<size_t>(count), 0.0);

  parallel_for(count, threads, [&](int64_t b, int64_t e) {
    for (int64_t ii = b; ii < e; ++ii) {
      if (!df.in_band[static_cast<size_t>(ii)]) continue;
      Mat hm(grid.n, grid.n);
      bool ok = true;
      for (int axis = 0; axis < grid.n && ok; ++axis) {
        const auto& minus = grid.links[static_cast<size_t>(ii)][static_cast<size_t>(axis)][0];
        const auto& plus = grid.links[static_cast<size_t>(ii)][static_cast<size_t>(axis)][1];
        const int64_t im = minus.neighbor, ip = plus.neighbor;
        const bool okm = im >= 0 && df.projected[static_cast<size_t>(im)];
        const bool okp = ip >= 0 && df.projected[static_cast<size_t>(ip)];
        if (okm && okp) {
          for (int k = 0; k < grid.n; ++k) {
            const double v = (df.grad[static_cast<size_t>(ip)][k] - df.grad[static_cast<size_t>(im)][k]) /
                             (2.0 * grid.h);
            hm(axis, k) += 0.5 * v;
            hm(k, axis) += 0.5 * v;
          }
        } else if (okp) {
          for (int k = 0; k < grid.n; ++k) {
            const double v = (df.grad[static_cast<size_t>(ip)][k] - df.grad[static_cast<size_t>(ii)][k]) / grid.h;
            hm(axis, k) += 0.5 * v;
            hm(k, axis) += 0.5 * v;
          }
        } else if (okm) {
          for (int k = 0; k < grid.n; ++k) {
            const double v = (df.grad[static_cast<size_t>(ii)][k] - df.grad[static_cast<size_t>(im)][k]) / grid.h;
            hm(axis, k) += 0.5 * v;
            hm(k, axis) += 0.5 * v;
          }
        } else {
          ok = false;
        }
      }
      if (!ok) continue;
      df.hess[static_cast<size_t>(ii)] = hm;
      df.hess_ok[static_cast<size_t>(ii)] = 1;
      const EigenSym es = jacobi_eigensym(hm);
      df.lambda_min[static_cast<size_t>(ii)] = es.values[grid.n - 1];
      double tr = 0.0;
      for (int i = 0; i < grid.n; ++i) tr += hm(i, i);
      df.laplacian[static_cast<size_t>(ii)] = tr;
    }
  });

  // Mean curvature at sampled boundary points (the cut points).
  df.boundary_H.assign(grid.cut_points.size(), 0.0);
  parallel_for(static_cast<int64_t>(grid.cut_points.size()), threads, [&](int64_t b, int64_t e) {
    for (int64_t k = b; k < e; ++k)
      df.boundary_H[static_cast<size_t>(k)] =
          detail::boundary_mean_curvature(spec, grid.cut_points[static_cast<size_t>(k)], scale);
  });

  return df;
}

struct GeometrySummary {
  double l = 0.0;             // diameter
  double r_omega = 0.0;       // exterior ball radius (inf for convex kinds)
  double lambda_minus = 0.0;  // max{0, -inf lambda_min(Hess d)} over the band
  double d0_regularity = 0.0; // largest band width with clean projections
  double min_boundary_H = 0.0;
  double h = 0.0;             // spacing of the grid the summary was taken on
  bool mean_convex = false;
  bool convex = false;
  bool coarse_sampling = false;  // fewer than 8 band nodes or cut points
};

inline GeometrySummary geometry_summary(const DomainSpec& spec, const Grid& grid,
                                        const DistanceField& df) {
  GeometrySummary s;
  s.l = spec.diameter();
  s.h = grid.h;
  s.convex = spec.convex();
  s.r_omega = spec.exterior_ball_radius();

  double inf_lmin = std::numeric_limits<double>::infinity();
  int64_t band_nodes = 0;
  for (int64_t ii = 0; ii < grid.inside_count(); ++ii) {
    if (!df.in_band[static_cast<size_t>(ii)] || !df.hess_ok[static_cast<size_t>(ii)]) continue;
    ++band_nodes;
    inf_lmin = std::min(inf_lmin, df.lambda_min[static_cast<size_t>(ii)]);
  }
  s.lambda_minus = (band_nodes > 0 && inf_lmin < 0.0) ? -inf_lmin : 0.0;

  // Largest band width with clean projections and eikonal-consistent
  // gradients everywhere below it; capped by how deep projection was even
  // attempted.
  double d0reg = df.attempt_limit;
  for (int64_t ii = 0; ii < grid.inside_count(); ++ii) {
    if (!df.attempted[static_cast<size_t>(ii)]) continue;
    bool clean = df.projected[static_cast<size_t>(ii)] != 0;
    if (clean) clean = std::fabs(df.grad[static_cast<size_t>(ii)].norm() - 1.0) <= 10.0 * grid.h;
    if (!clean) d0reg = std::min(d0reg, df.d[static_cast<size_t>(ii)]);
  }
  s.d0_regularity = d0reg;

  double min_h = std::numeric_limits<double>::infinity();
  for (double v : df.boundary_H) min_h = std::min(min_h, v);
  s.min_boundary_H = df.boundary_H.empty() ? 0.0 : min_h;
  s.mean_convex = !df.boundary_H.empty() && min_h >= -1e-6;
  s.coarse_sampling = band_nodes < 8 || grid.cut_points.size() < 8;
  return s;
}

}  // namespace mingraph
