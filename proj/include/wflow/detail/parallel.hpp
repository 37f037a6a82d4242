#ifndef WFLOW_DETAIL_PARALLEL_HPP
#define WFLOW_DETAIL_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace wflow::detail {

/// Worker count for inner loops: hardware concurrency capped by WFLOW_THREADS.
inline std::size_t thread_count() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("WFLOW_THREADS")) {
        try {
            const long cap = std::stol(env);
            if (cap >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
        } catch (...) {
            // malformed value: ignore the cap
        }
    }
    return n;
}

/// Runs fn(i) for i in [0, count) over contiguous chunks. Each index must write
/// only its own output slot; callers reduce afterwards in index order so results
/// do not depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const std::size_t workers = std::min(thread_count(), count);
    if (workers <= 1 || count < 64) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace wflow::detail

#endif  // WFLOW_DETAIL_PARALLEL_HPP
