#pragma once

#include <atomic>
#include <cstdlib>
#include <cstddef>
#include <algorithm>
#include <thread>
#include <vector>

namespace dpsim {

inline std::size_t worker_count() {
  static const std::size_t cached = [] {
    std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("DPSIM_THREADS")) {
      const long v = std::atol(env);
      if (v > 0) hw = std::min<std::size_t>(hw, static_cast<std::size_t>(v));
    }
    return hw;
  }();
  return cached;
}

namespace detail {
inline thread_local bool in_parallel_region = false;
}

// Runs fn(i) for i in [0, n). Work is handed out chunk by chunk via an atomic
// cursor; results must be written to per-index slots so the outcome is
// independent of thread scheduling. Nested calls degrade to serial loops.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t chunk = 0) {
  if (n == 0) return;
  const std::size_t workers =
      detail::in_parallel_region ? 1 : std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (chunk == 0) chunk = std::max<std::size_t>(1, n / (workers * 8));
  std::atomic<std::size_t> cursor{0};
  auto work = [&] {
    detail::in_parallel_region = true;
    for (;;) {
      const std::size_t begin = cursor.fetch_add(chunk);
      if (begin >= n) {
        detail::in_parallel_region = false;
        return;
      }
      const std::size_t end = std::min(n, begin + chunk);
      for (std::size_t i = begin; i < end; ++i) fn(i);
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (std::size_t t = 0; t + 1 < workers; ++t) threads.emplace_back(work);
  work();
  for (auto& th : threads) th.join();
}

}  // namespace dpsim
