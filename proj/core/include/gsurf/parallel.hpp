#pragma once

#include <cstdint>
#include <functional>

namespace gsurf {

// Resolves 0 to the hardware thread count.
int resolve_threads(int requested);

// Runs fn(chunk_index, begin, end) on contiguous chunks of [0, n).
// Chunk boundaries depend only on n, never on the worker count, so a
// reduction done per chunk and merged in chunk order is bitwise
// reproducible for every worker count.
void parallel_chunks(std::int64_t n, int threads,
                     const std::function<void(int, std::int64_t, std::int64_t)>& fn);

int chunk_count_for(std::int64_t n);

}  // namespace gsurf
