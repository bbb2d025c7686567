#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace gmethods {

// Thread count resolution: explicit request > GMETHODS_THREADS > hardware.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GMETHODS_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs body(i) for i in [0, n). Work items must be independent; callers that
// need randomness should derive a per-item generator from (seed, i) so results
// do not depend on the thread count.
inline void parallel_for(std::int64_t n, int threads,
                         const std::function<void(std::int64_t)>& body) {
  threads = resolve_threads(threads);
  if (threads <= 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  auto worker = [&]() {
    for (;;) {
      std::int64_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        body(i);
      } catch (...) {
        if (!failed.exchange(true)) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  int workers = static_cast<int>(std::min<std::int64_t>(threads, n));
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failed.load() && err) std::rethrow_exception(err);
}

}  // namespace gmethods
