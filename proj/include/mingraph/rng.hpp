#pragma once

// Pinned deterministic random number generation.  The report files promise
// byte-identical output for a given seed, so nothing here may depend on a
// standard-library distribution implementation: xoshiro256++ for the raw
// stream, explicit Box-Muller for normals, QR of a Gaussian matrix for
// Haar-distributed orthogonal factors.

#include <cmath>
#include <cstdint>

#include "mingraph/smallmat.hpp"

namespace mingraph {

class Rng {
 public:
  explicit Rng(uint64_t seed) {
    // splitmix64 seeding, as recommended for the xoshiro family.
    uint64_t z = seed;
    for (auto& word : state_) {
      z += 0x9e3779b97f4a7c15ULL;
      uint64_t x = z;
      x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
      x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
      word = x ^ (x >> 31);
    }
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 bits of randomness.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (no cached spare, so the stream position
  // is a pure function of the number of calls).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Derive an independent child stream; used to give parallel trials
  // reproducible per-trial seeds.  Pure in the parent state, so concurrent
  // spawns with distinct salts are race-free and order-independent.
  Rng spawn(uint64_t salt) const {
    return Rng(state_[0] ^ ((salt + 1) * 0x9e3779b97f4a7c15ULL));
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t state_[4];
};

// Haar-distributed random orthogonal n x n matrix: QR of a Gaussian matrix
// by modified Gram-Schmidt, with the diagonal of R forced positive (the
// sign fix is what makes the distribution exactly Haar).
inline Mat haar_orthogonal(int n, Rng& rng) {
  Mat g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < j; ++k) {
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += g(i, j) * g(i, k);
      for (int i = 0; i < n; ++i) g(i, j) -= dot * g(i, k);
    }
    double nrm = 0.0;
    for (int i = 0; i < n; ++i) nrm += g(i, j) * g(i, j);
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) {  // measure-zero; fall back to a canonical column
      g(j, j) = 1.0;
      nrm = 1.0;
    }
    for (int i = 0; i < n; ++i) g(i, j) /= nrm;
  }
  return g;
}

}  // namespace mingraph
