#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

namespace tsctl {

inline unsigned thread_count() {
  static unsigned n = [] {
    if (const char* env = std::getenv("TSCTL_THREADS")) {
      long v = std::strtol(env, nullptr, 10);
      if (v >= 1) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1u;
  }();
  return n;
}

// Static block partition of [0, n). Each index is processed exactly once and
// writers must target disjoint slots, so results are independent of the
// thread count and schedule.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  unsigned workers = thread_count();
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (workers > n) workers = static_cast<unsigned>(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    std::size_t lo = n * w / workers;
    std::size_t hi = n * (w + 1) / workers;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace tsctl
