#pragma once

#include <cstddef>
#include <functional>

namespace reglgc {

// Worker count: `requested` if positive, else REGLGC_THREADS if set, else
// hardware concurrency. Always >= 1.
int thread_count(int requested = 0);

// Runs body(i) for i in [0, n) across a work-stealing index counter.
// Deterministic as long as body(i) only writes to slot i of preallocated
// output; iteration order is unspecified. Exceptions are captured and the
// first one rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  int threads = 0);

}  // namespace reglgc
