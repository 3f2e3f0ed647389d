#pragma once

#include <exception>
#include <mutex>

#include <omp.h>

namespace knudsen {

struct Execution {
  bool parallel = true;
  int workers = 0;  // 0: OpenMP default

  static Execution serial() { return {false, 1}; }
};

// Calls f(i) for i in [0, n). The serial path is the reference; the OpenMP
// path must give identical results because every index owns its own state.
template <class F>
void for_each_index(long n, const Execution& ex, F&& f) {
  if (!ex.parallel) {
    for (long i = 0; i < n; ++i) f(i);
    return;
  }
  std::exception_ptr err;
  std::mutex mu;
  const int threads = ex.workers > 0 ? ex.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (long i = 0; i < n; ++i) {
    try {
      f(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace knudsen
