#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace graphvae {

/// Run fn(i) for i in [0, count). With threads > 1 the range is split into
/// contiguous chunks; callers must write results into preallocated
/// per-index slots so the outcome is order-independent.
inline void parallel_for(std::size_t count, unsigned threads,
                         const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    unsigned workers = std::min<std::size_t>(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = count * w / workers;
        std::size_t hi = count * (w + 1) / workers;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace graphvae
