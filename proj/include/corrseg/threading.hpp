#pragma once

#include <cstdint>
#include <functional>

namespace corrseg {

// Worker count: min(hardware_concurrency, CORRSEG_THREADS) when the env var
// is set, else hardware_concurrency. Always >= 1. Resolved once per process.
int worker_count();

// Runs fn(i) for i in [0, n) on the shared pool. Blocks until done. Work
// items must write disjoint outputs; the partition never affects results
// because each element's accumulation order is fixed inside fn.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

// Chunked variant: fn(begin, end) over a partition of [0, n).
void parallel_for_chunked(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace corrseg
