#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dipoletrap {

inline unsigned default_thread_count()
{
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1u : n;
}

/// Runs body(i) for i in [0, n) on up to `threads` workers. Work items must
/// write only to their own output slot; the first exception is rethrown.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body)
{
    if (n == 0)
        return;
    threads = std::clamp<unsigned>(threads, 1u, static_cast<unsigned>(std::min<std::size_t>(n, 1024)));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i)
            body(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n)
                return;
            try {
                body(i);
            }
            catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
                next.store(n);
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back(worker);
    }
    if (error)
        std::rethrow_exception(error);
}

}  // namespace dipoletrap
