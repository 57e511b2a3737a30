#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "bllab/grid.hpp"

namespace bllab {

/// Worker count used by the independent-task loops (lattice samples, sweep levels). Default 1.
void set_thread_count(int n);
int thread_count();
/// True on worker threads of a running parallel_for; nested loops then run serially.
bool& in_parallel_region();

/// Calls f(i) for i in [0, n) on up to thread_count() workers. Tasks must write to disjoint outputs.
/// The first exception thrown by any task is rethrown after all workers stop.
template <class F>
void parallel_for(Index n, F&& f) {
  const int workers = static_cast<int>(std::min<Index>(thread_count(), n));
  if (workers <= 1 || in_parallel_region()) {
    for (Index i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    in_parallel_region() = true;
    for (Index i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace bllab
