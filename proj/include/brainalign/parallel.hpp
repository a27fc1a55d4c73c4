#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace brainalign {

/// Worker cap from BRAINALIGN_THREADS, else the hardware concurrency.
inline std::size_t default_workers() {
  if (const char *env = std::getenv("BRAINALIGN_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1)
        return static_cast<std::size_t>(v);
    } catch (const std::exception &) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [0, n). Each index is handled exactly once and any
/// result must be written to a slot owned by i, so output never depends on
/// scheduling. The first exception thrown by a worker is rethrown.
template <class Fn> void parallel_for(std::size_t n, std::size_t workers, Fn &&fn) {
  workers = std::min(std::max<std::size_t>(workers, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error)
            error = std::current_exception();
          next = n;
        }
      }
    });
  for (auto &t : pool)
    t.join();
  if (error)
    std::rethrow_exception(error);
}

} // namespace brainalign
