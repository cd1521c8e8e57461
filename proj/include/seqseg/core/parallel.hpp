#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace seqseg {

/// Worker count: SEQSEG_NUM_THREADS when set to a positive integer, else the hardware concurrency.
inline int num_threads() {
  if (const char* env = std::getenv("SEQSEG_NUM_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<int>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// out[i] = f(i) for i in [0, n). Results are stored by index, so they do not depend on scheduling.
/// The first exception thrown by any call is rethrown after all workers stop.
template <typename R, typename F>
std::vector<R> parallel_map(std::size_t n, F&& f, int threads = num_threads()) {
  std::vector<R> out(n);
  const std::size_t workers = std::min<std::size_t>(std::max(1, threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = f(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace seqseg
