#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ksx {

// Worker count: KSX_THREADS when set to a positive integer, otherwise the
// hardware concurrency.
inline unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("KSX_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return hw;
}

namespace detail {
inline thread_local bool in_parallel_region = false;
}

// Calls fn(i) for i in [0, n). Callers write results into per-index slots,
// so the outcome never depends on scheduling. The first exception thrown by
// any call is rethrown after all workers finish. Nested calls run serially.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned workers = detail::in_parallel_region
                               ? 1u
                               : static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    const bool outer = detail::in_parallel_region;
    detail::in_parallel_region = true;
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
    detail::in_parallel_region = outer;
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace ksx
