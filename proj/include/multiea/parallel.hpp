#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace multiea {

namespace detail {
inline std::atomic<std::size_t>& thread_setting() {
    static std::atomic<std::size_t> threads{1};
    return threads;
}
} // namespace detail

/// Worker count for row-parallel kernels. 1 runs everything on the calling thread.
inline std::size_t thread_count() { return detail::thread_setting().load(); }

inline void set_thread_count(std::size_t n) { detail::thread_setting().store(std::max<std::size_t>(1, n)); }

/// Reads MULTIEA_THREADS; returns 0 when unset or unparsable.
inline std::size_t threads_from_env() {
    const char* raw = std::getenv("MULTIEA_THREADS");
    if (raw == nullptr) return 0;
    try {
        const long v = std::stol(raw);
        return v > 0 ? static_cast<std::size_t>(v) : 0;
    } catch (...) {
        return 0;
    }
}

/// Calls fn(i) for i in [begin, end), split into contiguous blocks. Each index
/// is handled by exactly one thread, so writes to disjoint rows are race-free
/// and results do not depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn) {
    const std::size_t n = end > begin ? end - begin : 0;
    const std::size_t workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t block = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = begin + w * block;
        const std::size_t hi = std::min(end, lo + block);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace multiea
