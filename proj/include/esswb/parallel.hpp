#pragma once

#include <cstddef>
#include <functional>

namespace esswb {

/// Worker count: ESSWB_THREADS if set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t thread_count();

/// Calls fn(k) for k in [0, n). Each k must write only to its own output
/// slot; results never depend on the number of workers. The first exception
/// thrown by any task is rethrown after all workers join. Calls made from
/// inside a worker run serially.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t max_threads = 0);

}  // namespace esswb
