#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace softshield::detail {

// Runs fn(i) for i in [0, n) across up to n_threads workers with a static
// partition. fn must be safe to call concurrently for distinct i; results
// should be written into pre-sized per-index slots so the outcome does not
// depend on the thread count.
inline void parallel_for(int n, int n_threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (n_threads <= 0) n_threads = int(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min(n_threads, n));
  if (n_threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(size_t(n_threads));
  for (int w = 0; w < n_threads; ++w) {
    const int begin = int(int64_t(n) * w / n_threads);
    const int end = int(int64_t(n) * (w + 1) / n_threads);
    workers.emplace_back([begin, end, &fn] {
      for (int i = begin; i < end; ++i) fn(i);
    });
  }
  for (std::thread& t : workers) t.join();
}

}  // namespace softshield::detail
