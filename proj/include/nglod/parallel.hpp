#pragma once

#include <cstddef>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

namespace nglod {

/// Caps the number of worker threads used by every parallel phase. Values < 1
/// restore the default (NGLOD_WORKERS if set, else hardware concurrency).
void set_worker_count(int workers);
int worker_count();

/// Parallel map over [0, n). fn(begin, end) sees disjoint ranges; no ordering
/// guarantees, so fn must only write to its own slice of the output.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t grain, Fn&& fn) {
    if (n == 0) return;
    if (grain == 0) grain = 1;
    if (n <= grain || worker_count() == 1) {
        fn(std::size_t{0}, n);
        return;
    }
    tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n, grain),
                      [&](const tbb::blocked_range<std::size_t>& r) { fn(r.begin(), r.end()); });
}

/// Parallel loop over fixed-size blocks. Block boundaries depend only on n and
/// block_size, so per-block partial results merged in block order are
/// reproducible regardless of the worker count.
template <typename Fn>
void for_each_block(std::size_t n, std::size_t block_size, Fn&& fn) {
    if (n == 0) return;
    const std::size_t blocks = (n + block_size - 1) / block_size;
    parallel_for(blocks, 1, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            const std::size_t begin = b * block_size;
            const std::size_t end = begin + block_size < n ? begin + block_size : n;
            fn(b, begin, end);
        }
    });
}

}  // namespace nglod
