#include "bllab/parallel.hpp"

#include "bllab/errors.hpp"

namespace bllab {

namespace {
std::atomic<int> g_threads{1};
}

void set_thread_count(int n) {
  if (n < 1) throw ValidationError("thread count must be at least 1");
  g_threads = n;
}

int thread_count() { return g_threads; }

bool& in_parallel_region() {
  thread_local bool flag = false;
  return flag;
}

}  // namespace bllab
