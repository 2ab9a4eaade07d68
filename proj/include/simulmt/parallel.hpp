#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace simulmt {

// Runs fn(0..count-1) on up to `parallelism` threads. fn must not throw;
// callers capture failures per index (std::exception_ptr slots) so results
// stay deterministic regardless of scheduling.
inline void parallel_for(std::size_t count, int parallelism,
                         const std::function<void(std::size_t)>& fn) {
    if (parallelism <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(parallelism), count);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                fn(i);
            }
        });
    }
    for (std::thread& t : threads) t.join();
}

}  // namespace simulmt
