#pragma once

// Small fixed-capacity dense linear algebra for per-node work.
// Everything here targets dimensions <= 4 (base dimension n and
// codimension m are both tiny); storage is stack-only so the hot
// per-node loops never allocate.

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>

namespace mingraph {

inline constexpr int kMaxDim = 4;

struct Vec {
  int n = 0;
  std::array<double, kMaxDim> a{};

  Vec() = default;
  explicit Vec(int n_) : n(n_) { assert(n >= 0 && n <= kMaxDim); }

  double& operator[](int i) {
    assert(i >= 0 && i < n);
    return a[static_cast<size_t>(i)];
  }
  double operator[](int i) const {
    assert(i >= 0 && i < n);
    return a[static_cast<size_t>(i)];
  }

  double norm2() const {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[static_cast<size_t>(i)] * a[static_cast<size_t>(i)];
    return s;
  }
  double norm() const { return std::sqrt(norm2()); }
};

struct Mat {
  int rows = 0, cols = 0;
  std::array<double, kMaxDim * kMaxDim> a{};

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c) {
    assert(r >= 0 && r <= kMaxDim && c >= 0 && c <= kMaxDim);
  }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(int i, int j) {
    assert(i >= 0 && i < rows && j >= 0 && j < cols);
    return a[static_cast<size_t>(i * kMaxDim + j)];
  }
  double operator()(int i, int j) const {
    assert(i >= 0 && i < rows && j >= 0 && j < cols);
    return a[static_cast<size_t>(i * kMaxDim + j)];
  }
};

inline Mat transpose(const Mat& m) {
  Mat t(m.cols, m.rows);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

inline Mat matmul(const Mat& x, const Mat& y) {
  assert(x.cols == y.rows);
  Mat z(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int k = 0; k < x.cols; ++k) {
      const double xik = x(i, k);
      if (xik == 0.0) continue;
      for (int j = 0; j < y.cols; ++j) z(i, j) += xik * y(k, j);
    }
  return z;
}

inline Vec matvec(const Mat& m, const Vec& v) {
  assert(m.cols == v.n);
  Vec r(m.rows);
  for (int i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < m.cols; ++j) s += m(i, j) * v[j];
    r[i] = s;
  }
  return r;
}

// Determinant by Gaussian elimination with partial pivoting (n <= 4).
inline double det(Mat m) {
  assert(m.rows == m.cols);
  const int n = m.rows;
  double d = 1.0;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    for (int i = k + 1; i < n; ++i)
      if (std::fabs(m(i, k)) > std::fabs(m(piv, k))) piv = i;
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(m.a[static_cast<size_t>(k * kMaxDim + j)],
                                            m.a[static_cast<size_t>(piv * kMaxDim + j)]);
      d = -d;
    }
    const double p = m(k, k);
    if (p == 0.0) return 0.0;
    d *= p;
    for (int i = k + 1; i < n; ++i) {
      const double f = m(i, k) / p;
      for (int j = k; j < n; ++j) m(i, j) -= f * m(k, j);
    }
  }
  return d;
}

// Inverse by Gauss-Jordan with partial pivoting.  All matrices inverted in
// this codebase are perturbations of the identity (g = I + Df Df^T), so the
// pivoting is belt-and-braces, not a conditioning fix.
inline Mat inverse(const Mat& m) {
  assert(m.rows == m.cols);
  const int n = m.rows;
  Mat a = m;
  Mat inv = Mat::identity(n);
  for (int k = 0; k < n; ++k) {
    int piv = k;
    for (int i = k + 1; i < n; ++i)
      if (std::fabs(a(i, k)) > std::fabs(a(piv, k))) piv = i;
    if (piv != k) {
      for (int j = 0; j < n; ++j) {
        std::swap(a.a[static_cast<size_t>(k * kMaxDim + j)], a.a[static_cast<size_t>(piv * kMaxDim + j)]);
        std::swap(inv.a[static_cast<size_t>(k * kMaxDim + j)], inv.a[static_cast<size_t>(piv * kMaxDim + j)]);
      }
    }
    const double p = a(k, k);
    assert(p != 0.0);
    const double ip = 1.0 / p;
    for (int j = 0; j < n; ++j) {
      a(k, j) *= ip;
      inv(k, j) *= ip;
    }
    for (int i = 0; i < n; ++i) {
      if (i == k) continue;
      const double f = a(i, k);
      if (f == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        a(i, j) -= f * a(k, j);
        inv(i, j) -= f * inv(k, j);
      }
    }
  }
  return inv;
}

struct EigenSym {
  Vec values;   // descending
  Mat vectors;  // columns are the corresponding orthonormal eigenvectors
};

// Cyclic Jacobi eigensolver for small symmetric matrices.  Unconditionally
// robust at these sizes; sweeps until the off-diagonal mass is below tol
// relative to the Frobenius norm.
inline EigenSym jacobi_eigensym(const Mat& s, double tol = 1e-12, int max_sweeps = 64) {
  assert(s.rows == s.cols);
  const int n = s.rows;
  Mat a = s;
  Mat v = Mat::identity(n);

  double fro = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) fro += a(i, j) * a(i, j);
  fro = std::sqrt(fro);
  const double thresh = tol * std::max(fro, 1.0);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(2.0 * off) <= thresh) break;

    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::fabs(apq) <= thresh * 1e-4) continue;
        const double app = a(p, p), aqq = a(q, q);
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                      : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }

  // Sort eigenpairs descending by eigenvalue.
  std::array<int, kMaxDim> order{};
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.begin() + n,
            [&](int x, int y) { return a(x, x) > a(y, y); });

  EigenSym out;
  out.values = Vec(n);
  out.vectors = Mat(n, n);
  for (int j = 0; j < n; ++j) {
    const int src = order[static_cast<size_t>(j)];
    out.values[j] = a(src, src);
    for (int i = 0; i < n; ++i) out.vectors(i, j) = v(i, src);
  }
  return out;
}

struct Svd {
  Vec sigma;  // n singular values, descending, zero-padded past min(n, m)
  Mat u;      // n x n left factor
  Mat v;      // m x m right factor; a = u * diag(sigma) * v^T
};

// SVD of an n x m matrix through the n x n Gram matrix a a^T.  The Gram
// route keeps one code path for every codimension; right vectors for
// positive singular values come from v_j = a^T u_j / sigma_j, and the
// kernel block is completed deterministically by Gram-Schmidt against the
// canonical basis (so repeated calls agree bit for bit).
inline Svd svd_gram(const Mat& a) {
  const int n = a.rows, m = a.cols;
  Mat gram(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < m; ++k) s += a(i, k) * a(j, k);
      gram(i, j) = s;
    }
  EigenSym es = jacobi_eigensym(gram);

  Svd out;
  out.sigma = Vec(n);
  out.u = es.vectors;
  out.v = Mat(m, m);
  for (int i = 0; i < n; ++i) out.sigma[i] = std::sqrt(std::max(0.0, es.values[i]));

  // Columns of v for sigma_j meaningfully positive.
  const double tiny = 1e-13 * std::max(1.0, out.sigma.n > 0 ? out.sigma[0] : 0.0);
  int filled = 0;
  for (int j = 0; j < std::min(n, m); ++j) {
    if (out.sigma[j] <= tiny) break;
    for (int i = 0; i < m; ++i) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += a(k, i) * out.u(k, j);
      out.v(i, j) = s / out.sigma[j];
    }
    ++filled;
  }
  // Complete the orthonormal basis of R^m.
  for (int j = filled; j < m; ++j) {
    for (int cand = 0; cand < m; ++cand) {
      Vec w(m);
      w[cand] = 1.0;
      for (int k = 0; k < j; ++k) {
        double dot = 0.0;
        for (int i = 0; i < m; ++i) dot += w[i] * out.v(i, k);
        for (int i = 0; i < m; ++i) w[i] -= dot * out.v(i, k);
      }
      const double nrm = w.norm();
      if (nrm > 1e-6) {
        for (int i = 0; i < m; ++i) out.v(i, j) = w[i] / nrm;
        break;
      }
    }
  }
  return out;
}

}  // namespace mingraph
