#pragma once

// Barrier functions as evaluable objects: the exterior-sphere boundary
// gradient bound, the log-distance barrier built from the band constants,
// the elliptic-action inequality as a fuzzable check, and the neck
// non-existence construction with its boundary-data threshold.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mingraph/boundary.hpp"
#include "mingraph/criteria.hpp"
#include "mingraph/domain.hpp"
#include "mingraph/errors.hpp"
#include "mingraph/parallel.hpp"
#include "mingraph/rng.hpp"
#include "mingraph/smallmat.hpp"

namespace mingraph {

enum class BarrierKind { exterior_sphere, log_distance, sqrt_neck, log_integral };

// A one-variable barrier profile with its first two derivatives.  The
// argument is a distance (to the boundary, or to a center point).
struct Barrier {
  BarrierKind kind{};
  double lo = 0.0, hi = 0.0;  // domain of definition
  bool pole_at_lo = false;    // slope -> -inf at the left endpoint
  std::function<double(double)> value, slope, curvature;
};

// Boundary gradient bound from the exterior-sphere construction, with
// v2_cap standing in for the graph's volume-density sup:
//   n l v2_cap e^{1 + n l v2_cap / r_omega} sup|D^2 psi^a| + sup|D psi^a|.
inline double exterior_sphere_bound(const BoundaryData& bd, const GeometrySummary& geo,
                                    double v2_cap, int alpha) {
  if (!(v2_cap >= 1.0)) throw Error("BadCondition", "v2_cap must be >= 1");
  const double nl = bd.n() * geo.l;
  double expo = 1.0;
  if (std::isfinite(geo.r_omega)) expo += nl * v2_cap / geo.r_omega;
  return nl * v2_cap * std::exp(expo) * bd.sup_hess(alpha) + bd.sup_grad(alpha);
}

// phi(d) = (1/nu) log(1 + kappa d / d0) on [0, d0]: increasing, concave,
// with slope kappa/(nu d0) at the wall.  The certificate phi(d0) >=
// dphi0_l (= |Dphi|_0 * l) holds by construction when kappa comes from
// the band constants; a failure means the inputs were assembled by hand.
inline Barrier log_distance_barrier(double nu, double kappa, double d0, double dphi0_l = 0.0) {
  if (!(nu >= 1.0 && kappa >= 1.0 && d0 > 0.0))
    throw Error("BadCondition", "need nu >= 1, kappa >= 1, d0 > 0");
  const double at_d0 = std::log1p(kappa) / nu;
  if (at_d0 < dphi0_l * (1.0 - 1e-12))
    throw Error("InconsistentConstants",
                "log-distance barrier tops out at " + std::to_string(at_d0) +
                    " < " + std::to_string(dphi0_l) +
                    "; kappa was not built from these gradient data");
  Barrier b;
  b.kind = BarrierKind::log_distance;
  b.lo = 0.0;
  b.hi = d0;
  b.value = [nu, kappa, d0](double d) { return std::log1p(kappa * d / d0) / nu; };
  b.slope = [nu, kappa, d0](double d) { return kappa / (nu * (d0 + kappa * d)); };
  b.curvature = [nu, kappa, d0](double d) {
    const double t = d0 + kappa * d;
    return -kappa * kappa / (nu * t * t);
  };
  return b;
}

// chi(d) = (2 sqrt(1+eps^2) / (sqrt(a) eps)) (sqrt(2a) - sqrt(d)) on
// (0, a): decreasing, convex, with an infinite slope at the wall.
inline Barrier sqrt_neck_barrier(double eps, double a) {
  if (!(eps > 0.0 && eps <= 1.0)) throw Error("BadEpsilon", "need 0 < eps <= 1");
  if (!(a > 0.0)) throw Error("BadRadius", "need a > 0");
  const double c = std::sqrt(1.0 + eps * eps) / (std::sqrt(a) * eps);
  Barrier b;
  b.kind = BarrierKind::sqrt_neck;
  b.lo = 0.0;
  b.hi = a;
  b.pole_at_lo = true;
  b.value = [c, a](double d) { return 2.0 * c * (std::sqrt(2.0 * a) - std::sqrt(d)); };
  b.slope = [c](double d) { return -c / std::sqrt(d); };
  b.curvature = [c](double d) { return 0.5 * c / (d * std::sqrt(d)); };
  return b;
}

namespace detail_barrier {

// integral_{rho}^{l} (log(t/a))^{-1/2} dt, with the endpoint singularity
// at t = a removed by t = a e^{s^2} (the integrand becomes 2 a e^{s^2}).
inline double log_inv_sqrt_integral(double a, double rho, double l) {
  const double s_lo = std::sqrt(std::log(rho / a));
  const double s_hi = std::sqrt(std::log(l / a));
  if (!(s_hi > s_lo)) return 0.0;
  auto f = [a](double s) { return 2.0 * a * std::exp(s * s); };
  // composite Simpson with interval doubling to a tight tolerance
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 4; k <= 1 << 20; k *= 2) {
    const double hstep = (s_hi - s_lo) / k;
    double acc = f(s_lo) + f(s_hi);
    for (int i = 1; i < k; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(s_lo + i * hstep);
    const double val = acc * hstep / 3.0;
    if (std::fabs(val - prev) <= 1e-12 * (1.0 + std::fabs(val))) return val;
    prev = val;
  }
  return prev;
}

}  // namespace detail_barrier

// phi(rho) = integral_rho^l (log(t/a))^{-1/2} dt on (a, l]: decreasing,
// with an infinite slope at rho = a.
inline Barrier log_integral_barrier(double a, double l) {
  if (!(a > 0.0 && a < l)) throw Error("BadRadius", "need 0 < a < l");
  Barrier b;
  b.kind = BarrierKind::log_integral;
  b.lo = a;
  b.hi = l;
  b.pole_at_lo = true;
  b.value = [a, l](double rho) { return detail_barrier::log_inv_sqrt_integral(a, rho, l); };
  b.slope = [a](double rho) { return -1.0 / std::sqrt(std::log(rho / a)); };
  b.curvature = [a](double rho) {
    const double lg = std::log(rho / a);
    return 0.5 / (rho * lg * std::sqrt(lg));
  };
  return b;
}

// Data ceiling for the neck non-existence construction: what boundary
// data a classical solution could not exceed at the neck, before the
// caller adds its own sup term.
inline double nonexistence_threshold(double eps, double a, double l) {
  if (!(eps > 0.0 && eps <= 1.0)) throw Error("BadEpsilon", "need 0 < eps <= 1");
  if (!(a > 0.0 && a < l)) throw Error("BadRadius", "need 0 < a < l");
  return 2.0 * std::sqrt(2.0 * (1.0 + eps * eps)) / eps +
         detail_barrier::log_inv_sqrt_integral(a, a, l);
}

struct ActionBoundReport {
  int n = 0, m = 0;
  int64_t trials = 0;
  int64_t violations = 0;
  int64_t invalid_samples = 0;
  double min_slack = std::numeric_limits<double>::infinity();
};

namespace detail_barrier {

struct ActionSample {
  Vec dd;        // unit gradient of the distance function
  Mat hess_d;    // distance Hessian: hess_d dd = 0, trace <= 0, >= -lam_minus
  double lam_minus = 0.0;
  double phi1 = 0.0, phi2 = 0.0;  // barrier slope (> 0) and curvature (<= 0)
  Vec dvphi;     // gradient of the C^2 perturbation
  Mat hvphi;     // its Hessian
  std::vector<Vec> dw;  // gradients of the m-1 auxiliary components
};

inline ActionSample draw_action(int n, int m, Rng& rng) {
  ActionSample s;
  // unit distance gradient and an orthonormal tangential frame
  Mat frame = haar_orthogonal(n, rng);
  s.dd = Vec(n);
  for (int i = 0; i < n; ++i) s.dd[i] = frame(i, 0);
  s.lam_minus = rng.uniform(0.0, 2.0);
  // tangential eigenvalues in [-lam_minus, lam_minus], flipped as a block
  // if the trace comes out positive (mean convexity of the level sets)
  Vec ev(n);
  double tr = 0.0;
  for (int i = 1; i < n; ++i) {
    ev[i] = rng.uniform(-s.lam_minus, s.lam_minus);
    tr += ev[i];
  }
  if (tr > 0.0)
    for (int i = 1; i < n; ++i) ev[i] = -ev[i];
  s.hess_d = Mat(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 1; k < n; ++k) acc += ev[k] * frame(i, k) * frame(j, k);
      s.hess_d(i, j) = acc;
    }
  s.phi1 = rng.uniform(0.05, 4.0);
  s.phi2 = -rng.uniform(0.0, 4.0);
  s.dvphi = Vec(n);
  for (int i = 0; i < n; ++i) s.dvphi[i] = 0.3 * rng.normal();
  s.hvphi = Mat(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double v = 0.5 * rng.normal();
      s.hvphi(i, j) = v;
      s.hvphi(j, i) = v;
    }
  for (int a = 0; a < m - 1; ++a) {
    Vec w(n);
    for (int i = 0; i < n; ++i) w[i] = 0.3 * rng.normal();
    s.dw.push_back(w);
  }
  return s;
}

inline Vec action_dphit(const ActionSample& s) {
  const int n = s.dd.n;
  Vec d(n);
  for (int i = 0; i < n; ++i) d[i] = s.phi1 * s.dd[i] + s.dvphi[i];
  return d;
}

inline Mat action_matrix(const ActionSample& s, int m) {
  const int n = s.dd.n;
  Mat mat(n, m);
  const Vec dphit = action_dphit(s);
  for (int i = 0; i < n; ++i) mat(i, 0) = dphit[i];
  for (int a = 1; a < m; ++a)
    for (int i = 0; i < n; ++i) mat(i, a) = s.dw[static_cast<size_t>(a - 1)][i];
  return mat;
}

inline bool action_conditioned(const ActionSample& s, int m, double tol = 0.0) {
  const Svd sv = svd_gram(action_matrix(s, m));
  const int n = s.dd.n;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (sv.sigma[i] * sv.sigma[j] > 1.0 + tol) return false;
  return true;
}

// slack = rhs - lhs of the elliptic action inequality at the sample
inline double action_slack(const ActionSample& s, int m) {
  const int n = s.dd.n;
  const Vec dphit = action_dphit(s);
  // Hess(phi o d + vphi) = phi'' dd dd^T + phi' Hess d + Hess vphi
  Mat hphit(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      hphit(i, j) = s.phi2 * s.dd[i] * s.dd[j] + s.phi1 * s.hess_d(i, j) + s.hvphi(i, j);
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = (i == j ? 1.0 : 0.0) + dphit[i] * dphit[j];
      for (const auto& w : s.dw) acc += w[i] * w[j];
      a(i, j) = acc;
    }
  const Mat ainv = inverse(a);
  double lhs = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) lhs += ainv(i, j) * hphit(i, j);

  const Svd sv = svd_gram(action_matrix(s, m));
  const double mu1 = sv.sigma[0];
  const double lam_plus = std::max(0.0, jacobi_eigensym(s.hvphi).values[0]);
  double dvphi2 = 0.0;
  for (int i = 0; i < n; ++i) dvphi2 += s.dvphi[i] * s.dvphi[i];
  const double mu1sq = std::max(mu1 * mu1, 1e-300);
  const double rhs = s.phi1 * s.lam_minus *
                         (2.0 / (s.phi1 * s.phi1) * (dvphi2 + (n - 1) / mu1sq) +
                          (n - 1) / (1.0 + mu1 * mu1)) +
                     s.phi2 / det(a) + n * lam_plus;
  return rhs - lhs;
}

}  // namespace detail_barrier

// Fuzzes the elliptic action inequality: conditioned random distance
// geometry, barrier slopes, and auxiliary gradients; counts violations.
inline ActionBoundReport elliptic_action_bound_check(int n, int m, int64_t trials, uint64_t seed,
                                                     int threads = 0, double tol = 1e-9) {
  if (n < 2 || n > kMaxDim || m < 1 || m > kMaxDim)
    throw Error("BadCondition", "need 2 <= n <= 4 and 1 <= m <= 4");
  if (trials < 1) throw Error("BadCondition", "need trials >= 1");
  if (threads <= 0) threads = default_threads();
  std::vector<double> slack(static_cast<size_t>(trials));
  std::vector<uint8_t> valid(static_cast<size_t>(trials));
  Rng root(seed);
  parallel_for(trials, threads, [&](int64_t b, int64_t e) {
    for (int64_t t = b; t < e; ++t) {
      Rng rng = root.spawn(static_cast<uint64_t>(t));
      detail_barrier::ActionSample smp;
      bool ok = false;
      for (int tries = 0; tries < 200 && !ok; ++tries) {
        smp = detail_barrier::draw_action(n, m, rng);
        ok = detail_barrier::action_conditioned(smp, m);
      }
      if (!ok) {
        valid[static_cast<size_t>(t)] = 0;
        slack[static_cast<size_t>(t)] = std::numeric_limits<double>::infinity();
        continue;
      }
      valid[static_cast<size_t>(t)] = detail_barrier::action_conditioned(smp, m, tol) ? 1 : 0;
      slack[static_cast<size_t>(t)] = detail_barrier::action_slack(smp, m);
    }
  });
  ActionBoundReport rep;
  rep.n = n;
  rep.m = m;
  rep.trials = trials;
  for (int64_t t = 0; t < trials; ++t) {
    if (!valid[static_cast<size_t>(t)]) ++rep.invalid_samples;
    if (slack[static_cast<size_t>(t)] < -tol) ++rep.violations;
    rep.min_slack = std::min(rep.min_slack, slack[static_cast<size_t>(t)]);
  }
  return rep;
}

struct NonexistenceData {
  BoundaryData data;       // psi^1 linear (small), psi^2 the bump (large)
  Vec q;                   // neck boundary point of zero mean curvature
  Vec direction;           // unit direction of the linear component
  double a = 0.0;          // certified curvature constant
  double threshold = 0.0;  // data ceiling at the chosen a
  double peak = 0.0;       // bump height actually used
  bool conclusive = true;  // false when the peak only ties the threshold
  std::vector<Vec> certificate;  // sampled points witnessing the a-conditions
};

namespace detail_barrier {

inline double numeric_distance(const DomainSpec& spec, const Vec& x) {
  const double scale = std::max(1.0, spec.diameter());
  const auto p = detail::project_to_boundary(spec, x, scale);
  if (!p) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (int i = 0; i < x.n; ++i) s += (x[i] - (*p)[i]) * (x[i] - (*p)[i]);
  return std::sqrt(s);
}

}  // namespace detail_barrier

// Builds the non-existence boundary data on a catenoid-neck domain:
// a linear component of slope eps along the neck's convex direction, and
// a bump at the equator whose peak tops the barrier ceiling by `margin`.
// The curvature constant a is certified by sampling; h is the grid
// spacing the experiment will run at (a must span at least four cells).
// peak_scale shrinks (or stretches) the bump relative to the certified
// peak; anything below one drops the data into the existence regime and
// marks the construction inconclusive.
inline NonexistenceData make_nonexistence_data(const DomainSpec& spec, double eps, double margin,
                                               double h, uint64_t seed = 20240824,
                                               double peak_scale = 1.0) {
  if (spec.kind != DomainKind::kCatenoidNeck)
    throw Error("GeometryUnsuitable", "the construction needs a catenoid-neck domain");
  if (!(eps > 0.0 && eps <= 1.0)) throw Error("BadEpsilon", "need 0 < eps <= 1");
  if (!(margin >= 0.0)) throw Error("BadCondition", "need margin >= 0");
  if (!(peak_scale > 0.0)) throw Error("BadCondition", "need peak_scale > 0");
  const int n = spec.n;
  const double c = spec.neck_geometry().c;
  const double l = spec.diameter();

  // The neck is revolved about the x1 axis; the waist circle lives in the
  // x2..xn subspace.  q sits on the waist, and the convex direction (where
  // the distance Hessian is strongly negative) is the waist tangent.
  NonexistenceData out;
  out.q = Vec(n);
  out.q[1] = c;
  out.direction = Vec(n);
  out.direction[2] = 1.0;

  // Certify the curvature constant: the largest radius a with
  //   d_dir,dir < -a  and  laplacian(d) >= -a eps^2 / (2 (1 + eps^2))
  // at every sampled point of B_a(q) within the domain.
  Rng rng(seed);
  const double lap_factor = eps * eps / (2.0 * (1.0 + eps * eps));
  const double fd = std::min(1e-3, 0.05 * c);
  auto hess_entry = [&](const Vec& x, int i, int j) {
    Vec xp = x, xm = x, xpm = x, xmp = x;
    if (i == j) {
      xp[i] += fd;
      xm[i] -= fd;
      return (detail_barrier::numeric_distance(spec, xp) -
              2.0 * detail_barrier::numeric_distance(spec, x) +
              detail_barrier::numeric_distance(spec, xm)) /
             (fd * fd);
    }
    xp[i] += fd;
    xp[j] += fd;
    xm[i] -= fd;
    xm[j] -= fd;
    xpm[i] += fd;
    xpm[j] -= fd;
    xmp[i] -= fd;
    xmp[j] += fd;
    return (detail_barrier::numeric_distance(spec, xp) +
            detail_barrier::numeric_distance(spec, xm) -
            detail_barrier::numeric_distance(spec, xpm) -
            detail_barrier::numeric_distance(spec, xmp)) /
           (4.0 * fd * fd);
  };

  const int ladder = 24;
  const double a_max = 0.9 * c;
  for (int step = 0; step < ladder; ++step) {
    const double a = a_max * (1.0 - static_cast<double>(step) / ladder);
    if (a <= 4.0 * h) break;
    bool pass = true;
    std::vector<Vec> witnesses;
    for (int trial = 0; trial < 160 && pass; ++trial) {
      // sample B_a(q) \cap Omega, keeping a cushion for the FD stencil
      Vec x(n);
      for (int attempt = 0;; ++attempt) {
        if (attempt >= 400) {
          pass = false;
          break;
        }
        double r2 = 0.0;
        for (int i = 0; i < n; ++i) {
          x[i] = out.q[i] + a * rng.uniform(-1.0, 1.0);
          r2 += (x[i] - out.q[i]) * (x[i] - out.q[i]);
        }
        if (r2 > a * a) continue;
        if (spec.level(x) >= 0.0) continue;
        bool cushion = true;
        for (int i = 0; i < n && cushion; ++i)
          for (int s = -2; s <= 2 && cushion; ++s) {
            Vec y = x;
            y[i] += s * fd;
            if (spec.level(y) >= 0.0) cushion = false;
          }
        if (cushion) break;
      }
      if (!pass) break;
      const double d11 = hess_entry(x, 2, 2);  // along the waist tangent
      double lap = 0.0;
      for (int i = 0; i < n; ++i) lap += hess_entry(x, i, i);
      if (!(d11 < -a) || !(lap >= -a * lap_factor) || !std::isfinite(d11) ||
          !std::isfinite(lap)) {
        pass = false;
        break;
      }
      if (witnesses.size() < 8) witnesses.push_back(x);
    }
    if (pass) {
      out.a = a;
      out.certificate = std::move(witnesses);
      break;
    }
  }
  if (out.a <= 4.0 * h)
    throw Error("GeometryUnsuitable",
                "no curvature constant a > 4h passed the sampled check; the neck is too sharp "
                "for eps = " + std::to_string(eps));

  out.threshold = nonexistence_threshold(eps, out.a, l);
  out.peak = peak_scale * (out.threshold + margin);
  out.conclusive = margin > 0.0 && peak_scale >= 1.0;

  // psi^1: linear, slope eps along the equator tangent
  BoundaryComponent lin;
  {
    const Vec dir = out.direction;
    lin.value = [dir, eps](const Vec& x) {
      double s = 0.0;
      for (int i = 0; i < x.n; ++i) s += dir[i] * x[i];
      return eps * s;
    };
    lin.grad = [dir, eps](const Vec& x) {
      Vec g(x.n);
      for (int i = 0; i < x.n; ++i) g[i] = eps * dir[i];
      return g;
    };
    lin.hess = [](const Vec& x) { return Mat(x.n, x.n); };
  }
  // psi^2: smooth bump at q, supported in B_a(q)
  BoundaryComponent bump;
  {
    const Vec q = out.q;
    const double a = out.a;
    const double peak = out.peak;
    auto profile = [a, peak, q](const Vec& x) {
      double r2 = 0.0;
      for (int i = 0; i < x.n; ++i) r2 += (x[i] - q[i]) * (x[i] - q[i]);
      const double s = r2 / (a * a);
      if (s >= 1.0) return 0.0;
      return peak * std::exp(1.0 - 1.0 / (1.0 - s));
    };
    bump.value = profile;
    const double step = 1e-5 * std::max(1.0, a);
    bump.grad = [profile, step](const Vec& x) {
      Vec g(x.n);
      for (int i = 0; i < x.n; ++i) {
        Vec xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        g[i] = (profile(xp) - profile(xm)) / (2.0 * step);
      }
      return g;
    };
    bump.hess = [profile, step](const Vec& x) {
      Mat hmat(x.n, x.n);
      const double base = profile(x);
      for (int i = 0; i < x.n; ++i) {
        Vec xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        hmat(i, i) = (profile(xp) - 2.0 * base + profile(xm)) / (step * step);
        for (int j = i + 1; j < x.n; ++j) {
          Vec a1 = x, a2 = x, a3 = x, a4 = x;
          a1[i] += step;
          a1[j] += step;
          a2[i] -= step;
          a2[j] -= step;
          a3[i] += step;
          a3[j] -= step;
          a4[i] -= step;
          a4[j] += step;
          const double v =
              (profile(a1) + profile(a2) - profile(a3) - profile(a4)) / (4.0 * step * step);
          hmat(i, j) = v;
          hmat(j, i) = v;
        }
      }
      return hmat;
    };
  }
  out.data = BoundaryData(spec, {lin, bump});
  return out;
}

}  // namespace mingraph
