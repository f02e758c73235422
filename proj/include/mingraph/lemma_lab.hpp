#pragma once

// Brute-force verification of the algebraic inequalities behind the
// gradient and determinant bounds: conditioned random matrix samples,
// violation counting with slack tracking, and a tightness search that
// hill-climbs toward equality cases.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mingraph/errors.hpp"
#include "mingraph/parallel.hpp"
#include "mingraph/rng.hpp"
#include "mingraph/smallmat.hpp"

namespace mingraph {

struct MatrixSample {
  int n = 0, m = 0;
  Mat s_mat;      // n x m
  Vec sigma;      // singular values, descending, zero-padded to n
  uint64_t seed = 0;

  // Column Euclidean norms summed: the |S^1| + ... + |S^m| of the bounds.
  double column_norm_sum() const {
    double sum = 0.0;
    for (int a = 0; a < m; ++a) {
      double c = 0.0;
      for (int i = 0; i < n; ++i) c += s_mat(i, a) * s_mat(i, a);
      sum += std::sqrt(c);
    }
    return sum;
  }

  double det_i_plus_sst() const {
    Mat g(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = (i == j) ? 1.0 : 0.0;
        for (int a = 0; a < m; ++a) acc += s_mat(i, a) * s_mat(j, a);
        g(i, j) = acc;
      }
    return det(g);
  }

  // Recomputed singular values must agree with the stored ones.
  bool singular_values_consistent(double tol = 1e-10) const {
    const Svd sv = svd_gram(s_mat);
    for (int i = 0; i < n; ++i)
      if (std::fabs(sv.sigma[i] - sigma[i]) > tol * (1.0 + std::fabs(sigma[i]))) return false;
    return true;
  }
};

enum class LemmaId { det_sum_bound, det_nine_bound, pair_product_bound };

inline std::string to_string(LemmaId id) {
  switch (id) {
    case LemmaId::det_sum_bound: return "det_sum_bound";
    case LemmaId::det_nine_bound: return "det_nine_bound";
    case LemmaId::pair_product_bound: return "pair_product_bound";
  }
  return "?";
}

struct LemmaReport {
  LemmaId lemma{};
  int n = 0, m = 0;
  int64_t trials = 0;
  int64_t violations = 0;
  int64_t invalid_samples = 0;  // samples failing their own conditioning (post-hoc recheck)
  double min_slack = 0.0;       // tightest rhs - lhs seen
  double worst_quantity = 0.0;  // lemma-specific headline number of the worst sample
  MatrixSample worst;
  uint64_t seed = 0;
};

namespace detail_lemma {

inline Mat conjugate(const Vec& sigma, int n, int m, Rng& rng) {
  const Mat u = haar_orthogonal(n, rng);
  const Mat v = haar_orthogonal(m, rng);
  Mat s(n, m);
  const int k = std::min(n, m);
  // S = U diag(sigma) V^T
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) {
      double acc = 0.0;
      for (int j = 0; j < k; ++j) acc += u(i, j) * sigma[j] * v(a, j);
      s(i, a) = acc;
    }
  return s;
}

// Singular values for the first conditioning: s1 >= sqrt(n-1) and
// s_i s_j <= 1 for i != j, sampled descending.
inline Vec sample_sigma_det_sum(int n, int m, Rng& rng) {
  const int k = std::min(n, m);
  Vec s(n);
  const double s1_lo = std::sqrt(static_cast<double>(n - 1));
  s[0] = rng.uniform(s1_lo, s1_lo + 9.0);
  double cap = std::min(s[0], 1.0 / s[0]);
  for (int i = 1; i < k; ++i) {
    s[i] = rng.uniform(0.0, cap);
    cap = std::min(cap, s[i]);
  }
  return s;
}

// Singular values with prod (1 + s_i^2) <= 9, sampled descending.
inline Vec sample_sigma_det_nine(int n, int m, Rng& rng) {
  const int k = std::min(n, m);
  Vec s(n);
  double budget = 9.0;
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    const double cap = std::min(prev, std::sqrt(budget - 1.0));
    s[i] = rng.uniform(0.0, cap);
    budget /= (1.0 + s[i] * s[i]);
    prev = s[i];
  }
  return s;
}

inline MatrixSample finish(LemmaId id, int n, int m, const Mat& s_mat, uint64_t seed) {
  MatrixSample smp;
  smp.n = n;
  smp.m = m;
  smp.s_mat = s_mat;
  smp.sigma = svd_gram(s_mat).sigma;
  smp.seed = seed;
  (void)id;
  return smp;
}

inline MatrixSample draw(LemmaId id, int n, int m, double big_k, Rng& rng, uint64_t seed) {
  switch (id) {
    case LemmaId::det_sum_bound:
      return finish(id, n, m, conjugate(sample_sigma_det_sum(n, m, rng), n, m, rng), seed);
    case LemmaId::det_nine_bound:
      return finish(id, n, m, conjugate(sample_sigma_det_nine(n, m, rng), n, m, rng), seed);
    case LemmaId::pair_product_bound: {
      // Column 1 and the tail block, under |Du^1|^2 sum_{a>=2}|Du^a|^2 <= K^2
      // and sum_{a>=2}|Du^a|^2 <= K.
      Mat s(n, m);
      const double tail = rng.uniform(0.0, big_k);
      // split the tail budget over the m-1 remaining columns
      Vec w(m - 1);
      double wsum = 0.0;
      for (int a = 0; a < m - 1; ++a) {
        w[a] = rng.uniform(0.0, 1.0);
        wsum += w[a];
      }
      for (int a = 1; a < m; ++a) {
        const double len2 = wsum > 0.0 ? tail * w[a - 1] / wsum : 0.0;
        Vec dir(n);
        double dn = 0.0;
        for (int i = 0; i < n; ++i) {
          dir[i] = rng.normal();
          dn += dir[i] * dir[i];
        }
        dn = std::sqrt(std::max(dn, 1e-300));
        for (int i = 0; i < n; ++i) s(i, a) = std::sqrt(len2) * dir[i] / dn;
      }
      const double r1_cap = tail > 0.0 ? big_k / std::sqrt(tail) : 10.0 * std::max(1.0, big_k);
      const double r1 = rng.uniform(0.0, r1_cap);
      Vec dir(n);
      double dn = 0.0;
      for (int i = 0; i < n; ++i) {
        dir[i] = rng.normal();
        dn += dir[i] * dir[i];
      }
      dn = std::sqrt(std::max(dn, 1e-300));
      for (int i = 0; i < n; ++i) s(i, 0) = r1 * dir[i] / dn;
      return finish(id, n, m, s, seed);
    }
  }
  throw Error("BadCondition", "unknown lemma id");
}

inline bool conditioning_holds(LemmaId id, const MatrixSample& smp, double big_k,
                               double tol = 1e-9) {
  const int k = std::min(smp.n, smp.m);
  switch (id) {
    case LemmaId::det_sum_bound: {
      if (smp.sigma[0] < std::sqrt(static_cast<double>(smp.n - 1)) - tol) return false;
      for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j)
          if (smp.sigma[i] * smp.sigma[j] > 1.0 + tol) return false;
      return true;
    }
    case LemmaId::det_nine_bound: {
      double p = 1.0;
      for (int i = 0; i < k; ++i) p *= 1.0 + smp.sigma[i] * smp.sigma[i];
      return p <= 9.0 + tol;
    }
    case LemmaId::pair_product_bound: {
      double r1 = 0.0, tail = 0.0;
      for (int i = 0; i < smp.n; ++i) r1 += smp.s_mat(i, 0) * smp.s_mat(i, 0);
      for (int a = 1; a < smp.m; ++a)
        for (int i = 0; i < smp.n; ++i) tail += smp.s_mat(i, a) * smp.s_mat(i, a);
      return r1 * tail <= big_k * big_k + tol && tail <= big_k + tol;
    }
  }
  return false;
}

// Returns (slack, headline quantity) for one sample; slack < 0 violates.
inline std::pair<double, double> evaluate(LemmaId id, const MatrixSample& smp, double big_k) {
  switch (id) {
    case LemmaId::det_sum_bound: {
      const double lhs = smp.det_i_plus_sst();
      const double cs = smp.column_norm_sum();
      return {1.0 + cs * cs - lhs, lhs};
    }
    case LemmaId::det_nine_bound: {
      const double lhs = smp.det_i_plus_sst();
      const double cs = smp.column_norm_sum();
      const double slack_det = 1.0 + cs * cs - lhs;
      // the proof's internal dichotomy: either the column-norm sum stays
      // below 2 sqrt(2), or the determinant cap of 9 settles the bound
      // outright (9 = 1 + (2 sqrt 2)^2)
      const double slack_dichotomy = std::max(2.0 * std::sqrt(2.0) - cs, 9.0 - lhs);
      return {std::min(slack_det, slack_dichotomy), lhs};
    }
    case LemmaId::pair_product_bound: {
      double worst = 0.0;
      const int k = std::min(smp.n, smp.m);
      for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j)
          worst = std::max(worst, smp.sigma[i] * smp.sigma[j]);
      return {2.0 * big_k - worst, worst};
    }
  }
  return {0.0, 0.0};
}

inline void validate_shape(LemmaId id, int n, int m, double big_k) {
  if (n < 2 || n > kMaxDim)
    throw Error("BadCondition", "need 2 <= n <= " + std::to_string(kMaxDim));
  if (m < 1 || m > kMaxDim)
    throw Error("BadCondition", "need 1 <= m <= " + std::to_string(kMaxDim));
  if (id == LemmaId::pair_product_bound) {
    if (m < 2) throw Error("BadCondition", "pair product bound needs m >= 2");
    if (!(big_k > 0.0)) throw Error("BadCondition", "pair product bound needs K > 0");
  }
}

}  // namespace detail_lemma

inline LemmaReport verify_lemma(LemmaId id, int n, int m, int64_t trials, uint64_t seed,
                                double big_k = 1.0, int threads = 0, double tol = 1e-9) {
  detail_lemma::validate_shape(id, n, m, big_k);
  if (trials < 1) throw Error("BadCondition", "need trials >= 1");
  if (threads <= 0) threads = default_threads();

  std::vector<double> slack(static_cast<size_t>(trials));
  std::vector<uint8_t> valid(static_cast<size_t>(trials));
  Rng root(seed);
  parallel_for(trials, threads, [&](int64_t b, int64_t e) {
    for (int64_t t = b; t < e; ++t) {
      Rng rng = root.spawn(static_cast<uint64_t>(t));
      const MatrixSample smp = detail_lemma::draw(id, n, m, big_k, rng, seed);
      valid[static_cast<size_t>(t)] =
          smp.singular_values_consistent() && detail_lemma::conditioning_holds(id, smp, big_k)
              ? 1
              : 0;
      slack[static_cast<size_t>(t)] = detail_lemma::evaluate(id, smp, big_k).first;
    }
  });

  // Sequential reduction keeps the report bit-identical across thread counts.
  LemmaReport rep;
  rep.lemma = id;
  rep.n = n;
  rep.m = m;
  rep.trials = trials;
  rep.seed = seed;
  rep.min_slack = std::numeric_limits<double>::infinity();
  int64_t worst_trial = -1;
  for (int64_t t = 0; t < trials; ++t) {
    if (!valid[static_cast<size_t>(t)]) ++rep.invalid_samples;
    const double s = slack[static_cast<size_t>(t)];
    if (s < -tol) ++rep.violations;
    if (s < rep.min_slack) {
      rep.min_slack = s;
      worst_trial = t;
    }
  }
  if (worst_trial >= 0) {
    Rng rng = root.spawn(static_cast<uint64_t>(worst_trial));
    rep.worst = detail_lemma::draw(id, n, m, big_k, rng, seed);
    rep.worst_quantity = detail_lemma::evaluate(id, rep.worst, big_k).second;
  }
  return rep;
}

inline LemmaReport verify_det_sum_bound(int n, int m, int64_t trials, uint64_t seed,
                                        int threads = 0) {
  return verify_lemma(LemmaId::det_sum_bound, n, m, trials, seed, 1.0, threads);
}
inline LemmaReport verify_det_nine_bound(int n, int m, int64_t trials, uint64_t seed,
                                         int threads = 0) {
  return verify_lemma(LemmaId::det_nine_bound, n, m, trials, seed, 1.0, threads);
}
inline LemmaReport verify_pair_product_bound(int n, int m, double big_k, int64_t trials,
                                             uint64_t seed, int threads = 0) {
  return verify_lemma(LemmaId::pair_product_bound, n, m, trials, seed, big_k, threads);
}

struct TightnessResult {
  MatrixSample worst;
  double slack = 0.0;
  int64_t evaluations = 0;
};

// Multi-start local search toward minimal slack: perturb the sample in
// matrix space, project back onto the conditioning set, accept decreases.
inline TightnessResult tightness_search(LemmaId id, int n, int m, int64_t budget, uint64_t seed,
                                        double big_k = 1.0) {
  detail_lemma::validate_shape(id, n, m, big_k);
  Rng root(seed);
  TightnessResult best;
  best.slack = std::numeric_limits<double>::infinity();

  auto project = [&](MatrixSample& smp) {
    // Rescale singular values into the admissible region, keeping frames.
    Svd sv = svd_gram(smp.s_mat);
    const int k = std::min(n, m);
    switch (id) {
      case LemmaId::det_sum_bound: {
        const double lo = std::sqrt(static_cast<double>(n - 1));
        sv.sigma[0] = std::max(sv.sigma[0], lo);
        for (int i = 1; i < k; ++i)
          sv.sigma[i] = std::min(sv.sigma[i], std::min(sv.sigma[i - 1], 1.0 / sv.sigma[0]));
        break;
      }
      case LemmaId::det_nine_bound: {
        double p = 1.0;
        for (int i = 0; i < k; ++i) p *= 1.0 + sv.sigma[i] * sv.sigma[i];
        if (p > 9.0) {
          // shrink uniformly until the product fits
          double lo_s = 0.0, hi_s = 1.0;
          for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo_s + hi_s);
            double q = 1.0;
            for (int i = 0; i < k; ++i) q *= 1.0 + mid * mid * sv.sigma[i] * sv.sigma[i];
            (q > 9.0 ? hi_s : lo_s) = mid;
          }
          for (int i = 0; i < k; ++i) sv.sigma[i] *= lo_s;
        }
        break;
      }
      case LemmaId::pair_product_bound: {
        double r1 = 0.0, tail = 0.0;
        for (int i = 0; i < n; ++i) r1 += smp.s_mat(i, 0) * smp.s_mat(i, 0);
        for (int a = 1; a < m; ++a)
          for (int i = 0; i < n; ++i) tail += smp.s_mat(i, a) * smp.s_mat(i, a);
        double ts = 1.0, rs = 1.0;
        if (tail > big_k) ts = std::sqrt(big_k / tail);
        const double tail2 = tail * ts * ts;
        if (r1 * tail2 > big_k * big_k && tail2 > 0.0)
          rs = std::sqrt(big_k * big_k / (r1 * tail2));
        for (int i = 0; i < n; ++i) smp.s_mat(i, 0) *= rs;
        for (int a = 1; a < m; ++a)
          for (int i = 0; i < n; ++i) smp.s_mat(i, a) *= ts;
        smp.sigma = svd_gram(smp.s_mat).sigma;
        return;
      }
    }
    // rebuild S = U diag V^T with the adjusted spectrum
    Mat s(n, m);
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < m; ++a) {
        double acc = 0.0;
        for (int j = 0; j < k; ++j) acc += sv.u(i, j) * sv.sigma[j] * sv.v(a, j);
        s(i, a) = acc;
      }
    smp.s_mat = s;
    smp.sigma = svd_gram(s).sigma;
  };

  const int64_t starts = std::max<int64_t>(1, budget / 64);
  int64_t used = 0;
  for (int64_t s0 = 0; s0 < starts && used < budget; ++s0) {
    Rng rng = root.spawn(static_cast<uint64_t>(s0));
    MatrixSample cur = detail_lemma::draw(id, n, m, big_k, rng, seed);
    double cur_slack = detail_lemma::evaluate(id, cur, big_k).first;
    ++used;
    double step = 0.3;
    while (step > 1e-10 && used < budget) {
      MatrixSample cand = cur;
      for (int i = 0; i < n; ++i)
        for (int a = 0; a < m; ++a) cand.s_mat(i, a) += step * rng.normal();
      project(cand);
      cand.sigma = svd_gram(cand.s_mat).sigma;
      const double sl = detail_lemma::evaluate(id, cand, big_k).first;
      ++used;
      if (sl < cur_slack) {
        cur = cand;
        cur_slack = sl;
      } else {
        step *= 0.8;
      }
    }
    if (cur_slack < best.slack) {
      best.slack = cur_slack;
      best.worst = cur;
    }
  }
  best.evaluations = used;
  return best;
}

}  // namespace mingraph
