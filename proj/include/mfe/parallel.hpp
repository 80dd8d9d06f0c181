#pragma once

// Deterministic chunked parallel loop. Work is split into fixed contiguous
// ranges so a given (n, threads) pair always produces the same partition;
// callers keep per-range buffers and merge serially to stay bit-reproducible.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mfe {

inline int clamp_thread_count(int requested) {
    if (requested <= 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }
    return requested;
}

// fn(begin, end) is invoked on disjoint ranges covering [0, n). The partition
// depends only on n and threads, never on scheduling.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    threads = clamp_thread_count(threads);
    if (threads <= 1 || n < 2) {
        if (n > 0) fn(std::size_t{0}, n);
        return;
    }
    const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    const std::size_t chunk = (n + nt - 1) / nt;
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex err_mutex;
    pool.reserve(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        const std::size_t b = t * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&, b, e] {
            try {
                fn(b, e);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace mfe
