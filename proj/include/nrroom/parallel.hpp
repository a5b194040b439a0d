#pragma once

#include <cstddef>
#include <functional>

namespace nrroom {

// Worker count: NRROOM_THREADS when set (>0), otherwise hardware concurrency.
int worker_count();

// Runs fn(chunk_index, begin, end) over [0, n) split into fixed-size chunks.
// Chunk boundaries depend only on n and chunk_size, never on the worker
// count, so callers that store per-chunk results and reduce them in chunk
// order get identical results at any parallelism level.
void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace nrroom
