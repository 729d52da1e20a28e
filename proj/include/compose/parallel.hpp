#pragma once

#include <cstddef>
#include <functional>

namespace compose {

// Worker cap: COMPOSE_MOTION_THREADS if set to a positive integer, else the
// hardware concurrency.
std::size_t worker_count();

// Runs fn(i) for i in [0, n) over up to worker_count() threads. Each index
// is visited exactly once; callers write only to slot i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace compose
