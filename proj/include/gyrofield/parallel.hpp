#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace gyrofield {

/// Worker count used when a caller does not pass one: GYROFIELD_WORKERS if
/// set, otherwise the hardware concurrency.
inline int default_workers() {
  if (const char* env = std::getenv("GYROFIELD_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [begin, end) on up to `workers` threads using static
/// contiguous chunks. fn must only write state owned by index i. If several
/// chunks throw, the exception from the lowest chunk is rethrown.
template <class Fn>
void parallel_for(int begin, int end, int workers, Fn&& fn) {
  const int n = end - begin;
  if (n <= 0) return;
  workers = std::clamp(workers, 1, n);
  if (workers == 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      const int lo = begin + static_cast<int>(static_cast<long long>(n) * w / workers);
      const int hi = begin + static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
      pool.emplace_back([&, lo, hi, w] {
        try {
          for (int i = lo; i < hi; ++i) fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace gyrofield
