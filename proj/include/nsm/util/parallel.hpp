#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace nsm::util {

// Runs fn(thread_index, begin, end) over contiguous chunks of [0, n). With
// threads <= 1 everything runs inline on the calling thread, which is the
// bit-deterministic mode. With more threads, callers must reduce per-chunk
// results in chunk order so the result is deterministic up to the (fixed)
// chunk boundaries.
template <class F>
void parallel_chunks(std::size_t n, int threads, F&& fn) {
    if (threads <= 1 || n < 2) {
        fn(0, std::size_t{0}, n);
        return;
    }
    const std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(t);
    const std::size_t chunk = (n + t - 1) / t;
    for (std::size_t k = 0; k < t; ++k) {
        const std::size_t b = k * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, k, b, e] { fn(static_cast<int>(k), b, e); });
    }
    for (auto& th : pool) th.join();
}

} // namespace nsm::util
