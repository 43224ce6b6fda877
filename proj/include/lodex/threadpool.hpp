#pragma once

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "lodex/tensor.hpp"

// Deterministic fan-out for read-only parallel work (validation forwards,
// sweep points). Items write results into caller-owned slots indexed by item,
// and reductions happen in index order on the caller side, so the outcome is
// identical for any thread count. LODEX_THREADS is the only environment knob.

namespace lodex {

inline int thread_count() {
    if (const char* env = std::getenv("LODEX_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1 || v > 4096)
            throw ConfigError("LODEX_THREADS must be an integer in [1, 4096]");
        return static_cast<int>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// fn(i) is called exactly once for every i in [0, n); chunks of 16 items are
// handed to workers in arbitrary order.
template <typename Fn>
void parallel_for(size_t n, Fn&& fn, int threads = -1) {
    if (threads < 0) threads = thread_count();
    constexpr size_t kChunk = 16;
    if (threads <= 1 || n <= kChunk) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const size_t begin = next.fetch_add(kChunk);
            if (begin >= n) return;
            const size_t end = std::min(n, begin + kChunk);
            for (size_t i = begin; i < end; ++i) fn(i);
        }
    };
    std::vector<std::thread> pool;
    const size_t want = std::min<size_t>(static_cast<size_t>(threads), (n + kChunk - 1) / kChunk);
    pool.reserve(want);
    for (size_t t = 0; t < want; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
}

}  // namespace lodex
