#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sxt::parallel {

inline std::atomic<int>& max_threads_slot() {
    static std::atomic<int> v{0};  // 0 = use hardware concurrency
    return v;
}

inline void set_max_threads(int n) { max_threads_slot().store(n, std::memory_order_relaxed); }

inline int effective_threads(std::int64_t items) {
    if (items <= 1) return 1;
    int cap = max_threads_slot().load(std::memory_order_relaxed);
    if (cap <= 0) {
        unsigned hw = std::thread::hardware_concurrency();
        cap = hw > 0 ? static_cast<int>(hw) : 1;
    }
    return static_cast<int>(std::min<std::int64_t>(cap, items));
}

// Runs fn(i) for i in [begin, end), partitioned into contiguous chunks.
// Chunks are disjoint, so workers never touch the same output element;
// the first exception thrown by any worker is rethrown on the caller.
template <class Fn>
void parallel_for(std::int64_t begin, std::int64_t end, Fn&& fn) {
    const std::int64_t n = end - begin;
    if (n <= 0) return;
    const int nt = effective_threads(n);
    if (nt <= 1) {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
        return;
    }
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex err_mutex;
    const std::int64_t chunk = (n + nt - 1) / nt;
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t) {
        const std::int64_t lo = begin + t * chunk;
        const std::int64_t hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back([&, lo, hi] {
            try {
                for (std::int64_t i = lo; i < hi && !failed.load(std::memory_order_relaxed); ++i)
                    fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
            }
        });
    }
    for (auto& w : workers) w.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace sxt::parallel
