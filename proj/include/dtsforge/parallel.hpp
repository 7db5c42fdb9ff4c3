#pragma once

#include <cstddef>
#include <functional>

namespace dtsforge {

/// Worker count: DTSFORGE_THREADS if set and positive, else the hardware concurrency.
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Each index is visited exactly once, so callers that
/// write only to slot i get results independent of scheduling. Calls made from inside
/// a worker run serially on that worker.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace dtsforge
