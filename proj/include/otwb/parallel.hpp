#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace otwb {

/// Worker cap from OTWB_THREADS (default 1).
inline int thread_cap() {
  const char* env = std::getenv("OTWB_THREADS");
  if (env == nullptr) return 1;
  const int v = std::atoi(env);
  return std::clamp(v, 1, 256);
}

/// Runs body(i) for i in [0, count). Each index is handled by exactly one
/// worker, so results are independent of the thread count as long as body
/// only writes to slot i. The first exception is rethrown on the caller.
template <class Body>
void parallel_for(long count, Body&& body) {
  const int workers = static_cast<int>(std::min<long>(thread_cap(), count));
  if (workers <= 1) {
    for (long i = 0; i < count; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex guard;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (long i = w; i < count; i += workers) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(guard);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace otwb
