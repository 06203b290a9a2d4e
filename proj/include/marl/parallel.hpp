#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

namespace marl {

namespace detail {
inline std::atomic<int>& thread_count_slot() {
  static std::atomic<int> n{0};  // 0 = hardware concurrency
  return n;
}
}  // namespace detail

inline int compute_threads() {
  int n = detail::thread_count_slot().load(std::memory_order_relaxed);
  if (n <= 0) {
    unsigned hw = std::thread::hardware_concurrency();
    n = hw ? int(hw) : 1;
  }
  return n;
}

inline void set_compute_threads(int n) {
  detail::thread_count_slot().store(n, std::memory_order_relaxed);
}

// Splits [0, n) into contiguous chunks, one per worker. Every index is
// processed by exactly one thread, so kernels that fully compute an output
// element inside f(i) produce bitwise-identical results for any thread count.
// `work_per_item` is a rough flop estimate used to skip threading overhead
// on small problems.
// Hands each worker one contiguous [lo, hi) range. Use when the per-range
// loop wants a cache-friendly order that differs from the split dimension.
template <typename F>
void parallel_chunks(int64_t n, int64_t work_per_item, F&& f) {
  const int threads = compute_threads();
  if (n <= 0) return;
  if (threads <= 1 || n < 2 || n * work_per_item < 262144) {
    f(int64_t(0), n);
    return;
  }
  const int workers = int(std::min<int64_t>(threads, n));
  const int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(size_t(workers - 1));
  for (int w = 1; w < workers; ++w) {
    const int64_t lo = w * chunk;
    const int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &f] { f(lo, hi); });
  }
  f(int64_t(0), std::min<int64_t>(chunk, n));
  for (auto& t : pool) t.join();
}

template <typename F>
void parallel_for(int64_t n, int64_t work_per_item, F&& f) {
  const int threads = compute_threads();
  if (n <= 0) return;
  if (threads <= 1 || n < 2 || n * work_per_item < 262144) {
    for (int64_t i = 0; i < n; ++i) f(i);
    return;
  }
  const int workers = int(std::min<int64_t>(threads, n));
  const int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(size_t(workers - 1));
  for (int w = 1; w < workers; ++w) {
    const int64_t lo = w * chunk;
    const int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &f] {
      for (int64_t i = lo; i < hi; ++i) f(i);
    });
  }
  for (int64_t i = 0; i < std::min<int64_t>(chunk, n); ++i) f(i);
  for (auto& t : pool) t.join();
}

}  // namespace marl
