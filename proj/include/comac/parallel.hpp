#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace comac {

/// Worker count for kernels: COMAC_THREADS if set to a positive integer,
/// otherwise the hardware concurrency.
inline std::size_t kernel_threads() {
  if (const char* env = std::getenv("COMAC_THREADS")) {
    try {
      auto n = std::stoll(env);
      if (n > 0) return static_cast<std::size_t>(n);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [0, n). Work is split into contiguous blocks; each
/// index is handled by exactly one thread, so results written per index do
/// not depend on the schedule.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t threads = kernel_threads()) {
  threads = std::min(threads, n);
  if (threads <= 1 || n < 64) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        const std::size_t lo = n * t / threads, hi = n * (t + 1) / threads;
        try {
          for (std::size_t i = lo; i < hi; ++i) fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace comac
