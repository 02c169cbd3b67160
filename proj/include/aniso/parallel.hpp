#pragma once

#include <functional>

namespace aniso {

/// Worker count: ANISO_THREADS if set (>= 1), else the hardware concurrency.
int thread_count();

/// Runs body(begin, end) over a static partition of [0, count). Each index is
/// visited exactly once; callers write results into per-index slots and reduce
/// sequentially afterwards, so results do not depend on the thread count.
/// Each worker gets at least min_chunk indices.
void parallel_for(int count, const std::function<void(int, int)>& body, int min_chunk = 256);

}  // namespace aniso
