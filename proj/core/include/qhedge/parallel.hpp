#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace qhedge {

// Worker count comes from QHEDGE_THREADS when set, else the hardware.
// Results never depend on it: work is split into fixed-size chunks and all
// reductions combine chunk results in chunk order.
inline unsigned thread_count() {
    if (const char* env = std::getenv("QHEDGE_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(std::min<long>(v, 256));
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

constexpr std::size_t kParallelChunk = 4096;

inline std::size_t chunk_count(std::size_t n, std::size_t chunk = kParallelChunk) {
    return n == 0 ? 0 : (n + chunk - 1) / chunk;
}

/// Runs fn(begin, end) over fixed chunks of [0, n). Writes made by fn must be
/// disjoint across chunks.
inline void parallel_for_chunks(std::size_t n,
                                const std::function<void(std::size_t, std::size_t)>& fn,
                                std::size_t chunk = kParallelChunk) {
    const std::size_t chunks = chunk_count(n, chunk);
    if (chunks == 0) return;
    const unsigned workers = std::min<std::size_t>(thread_count(), chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) {
            fn(c * chunk, std::min(n, (c + 1) * chunk));
        }
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::atomic<std::size_t> next{0};
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                std::size_t c = next.fetch_add(1);
                if (c >= chunks) return;
                fn(c * chunk, std::min(n, (c + 1) * chunk));
            }
        });
    }
    for (auto& t : pool) t.join();
}

/// Maps fn over fixed chunks of [0, n) and combines the per-chunk results in
/// chunk-index order, which keeps floating point reductions deterministic for
/// any worker count.
template <typename Partial, typename ChunkFn, typename CombineFn>
void parallel_reduce_chunks(std::size_t n, ChunkFn chunk_fn, CombineFn combine,
                            std::size_t chunk = kParallelChunk) {
    const std::size_t chunks = chunk_count(n, chunk);
    if (chunks == 0) return;
    std::vector<Partial> partials(chunks);
    parallel_for_chunks(
        n,
        [&](std::size_t begin, std::size_t end) {
            partials[begin / chunk] = chunk_fn(begin, end);
        },
        chunk);
    for (std::size_t c = 0; c < chunks; ++c) {
        combine(partials[c]);
    }
}

}  // namespace qhedge
