#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace evolm {

// Worker count for data-parallel sections: explicit request, else the
// EVOLM_THREADS environment variable, else hardware concurrency (capped).
inline int resolve_threads(int requested) {
    if (requested > 0) {
        return requested;
    }
    if (const char* env = std::getenv("EVOLM_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) {
            return n;
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(hw == 0 ? 1 : (hw > 8 ? 8 : hw));
}

// Applies fn to every index and returns results in index order, so callers
// can merge floating-point contributions deterministically.
template <typename R>
std::vector<R> parallel_map(std::int64_t n, int threads,
                            const std::function<R(std::int64_t)>& fn) {
    std::vector<R> results(static_cast<std::size_t>(n));
    const int workers = static_cast<int>(
        std::min<std::int64_t>(static_cast<std::int64_t>(resolve_threads(threads)), n));
    if (workers <= 1) {
        for (std::int64_t i = 0; i < n; ++i) {
            results[static_cast<std::size_t>(i)] = fn(i);
        }
        return results;
    }
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (std::int64_t i = w; i < n; i += workers) {
                    results[static_cast<std::size_t>(i)] = fn(i);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
    return results;
}

}  // namespace evolm
