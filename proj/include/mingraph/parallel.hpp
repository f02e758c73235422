#pragma once

// Minimal deterministic parallel-for.  Work is split into fixed contiguous
// chunks; reductions combine per-chunk results in chunk order, so the
// floating-point result is independent of thread scheduling (and of the
// thread count when the caller reduces per element, as the hot loops do).

#include <algorithm>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace mingraph {

inline int default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Calls fn(begin, end) on disjoint ranges covering [0, count).
template <typename Fn>
void parallel_for(int64_t count, int threads, Fn&& fn) {
  if (count <= 0) return;
  threads = static_cast<int>(std::max<int64_t>(1, std::min<int64_t>(threads, count)));
  if (threads == 1) {
    fn(int64_t{0}, count);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  const int64_t chunk = (count + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int64_t b = t * chunk;
    const int64_t e = std::min(count, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace mingraph
