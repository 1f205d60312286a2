#pragma once

#include <cstdint>
#include <functional>

namespace patchlikely {

// Worker cap: PATCHLIKELY_THREADS when set, otherwise the hardware
// concurrency. Always at least 1.
int worker_count();
void set_worker_count(int workers);  // 0 restores the environment default

// Splits [0, n) into contiguous blocks of `grain` indices and runs them on up
// to worker_count() threads. Callers write results into per-index slots, so
// the outcome does not depend on scheduling.
void parallel_for(int64_t n, int64_t grain, const std::function<void(int64_t begin, int64_t end)>& fn);

}  // namespace patchlikely
