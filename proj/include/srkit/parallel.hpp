#pragma once

// Tiny index-space parallel loop.  Work items write to caller-preallocated
// slots, so results are identical regardless of the thread count.

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace srkit {

/// Runs body(i) for i in [0, count).  threads <= 1 runs serially.
inline void parallel_for(int count, int threads, const std::function<void(int)>& body) {
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    int nt = std::min(threads, count);
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(nt));
    for (int w = 0; w < nt; ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
        });
    for (auto& th : pool) th.join();
}

/// Resolve a worker count: explicit request wins, else hardware concurrency.
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace srkit
