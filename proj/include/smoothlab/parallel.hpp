#pragma once

#include <cstddef>
#include <functional>

namespace smoothlab {

/// Hardware concurrency, capped by SMOOTHLAB_THREADS when set.
std::size_t worker_count();

/// Calls fn(i) for i in [0, count) on up to worker_count() threads. Callers
/// write results by index, so output order never depends on scheduling.
/// The first exception thrown by any call is rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace smoothlab
