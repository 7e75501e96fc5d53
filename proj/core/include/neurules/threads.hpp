#pragma once

#include <cstddef>
#include <functional>

namespace neurules {

/// Worker count used by parallel maps. Resolution order: explicit
/// set_thread_count(), then the NEUROLOGIC_THREADS environment variable,
/// then 1.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs fn(i) for i in [0, n) on up to thread_count() workers. fn must only
/// write to per-index state; results are therefore independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t max_workers = 0);

}  // namespace neurules
