#pragma once

#include <omp.h>

namespace sbanm::detail {

// Sets the OpenMP worker count for the lifetime of the scope. Every parallel
// loop in the library writes per-index results and reduces them serially in
// index order, so the worker count never changes a result.
class ThreadScope {
 public:
  explicit ThreadScope(int threads) : previous_(omp_get_max_threads()) {
    if (threads > 0) omp_set_num_threads(threads);
  }
  ~ThreadScope() { omp_set_num_threads(previous_); }
  ThreadScope(const ThreadScope&) = delete;
  ThreadScope& operator=(const ThreadScope&) = delete;

 private:
  int previous_;
};

}  // namespace sbanm::detail
