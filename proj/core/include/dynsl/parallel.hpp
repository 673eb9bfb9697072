#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace dynsl {

/// Runs body(0..count-1) on up to `threads` workers. Each index runs exactly
/// once; the first exception (lowest index) is rethrown after all workers join.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = count;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t k = next++; k < count; k = next++) {
      try {
        body(k);
      } catch (...) {
        std::lock_guard lock(mu);
        if (k < failed_at) {
          failed_at = k;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  const std::size_t n = std::min(threads, count);
  for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

/// Hardware concurrency, at least 1.
inline std::size_t default_threads() { return std::max<std::size_t>(1, std::thread::hardware_concurrency()); }

}  // namespace dynsl
