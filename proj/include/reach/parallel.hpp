#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace reach {

inline int hardware_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

// Runs fn(i) for i in [0, n). Work items must be independent; results should
// be written to pre-sized slots so reduction order stays fixed.
inline void parallel_for(int n, const std::function<void(int)>& fn, int max_threads = 0) {
  int nthreads = max_threads > 0 ? max_threads : hardware_threads();
  if (nthreads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  if (nthreads > n) nthreads = n;
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(nthreads));
  for (int t = 0; t < nthreads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace reach
