#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace axdbn {

inline unsigned worker_count() {
    static unsigned n = [] {
        if (const char* env = std::getenv("AXDBN_THREADS")) {
            long v = std::strtol(env, nullptr, 10);
            if (v >= 1) return static_cast<unsigned>(v);
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1u : hw;
    }();
    return n;
}

// Runs fn(i) for every i in [0,n). Each fn(i) must write only to its own
// output slot; scheduling order is then irrelevant to the result.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned workers =
        static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t block = std::max<std::size_t>(1, n / (workers * 8u));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            std::size_t begin = next.fetch_add(block);
            if (begin >= n) return;
            std::size_t end = std::min(n, begin + block);
            for (std::size_t i = begin; i < end; ++i) fn(i);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (unsigned t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
}

// Deterministic parallel sum of fn(i): values are accumulated in fixed-size
// chunks and the chunk partials are combined in index order, so the result
// does not depend on the number of threads.
template <typename Fn>
double parallel_sum(std::size_t n, Fn&& fn) {
    constexpr std::size_t kChunk = 256;
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(chunks, 0.0);
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t begin = c * kChunk;
        const std::size_t end = std::min(n, begin + kChunk);
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i) s += fn(i);
        partial[c] = s;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

}  // namespace axdbn
