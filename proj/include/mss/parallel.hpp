#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "mss/types.hpp"

namespace mss {

/// Runs fn(i) for i in [0, count) on up to `workers` threads.
/// Each index is handled exactly once; the first exception thrown is rethrown.
template <typename Fn>
void parallel_for(Index count, int workers, Fn&& fn) {
  if (count <= 0) return;
  const Index threads = std::min<Index>(std::max(workers, 1), count);
  if (threads == 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (Index i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(threads - 1));
  for (Index t = 1; t < threads; ++t) pool.emplace_back(body);
  body();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace mss
