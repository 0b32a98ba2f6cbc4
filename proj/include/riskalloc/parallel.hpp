#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace riskalloc {

/// Run fn(0..n-1) across at most `threads` workers with a static stride
/// assignment. Each index writes only its own output slot, so results are
/// identical for every thread count; only wall time changes.
inline void run_indexed(std::size_t n, std::size_t threads,
                        const std::function<void(std::size_t)>& fn) {
    if (n == 0)
        return;
    if (threads == 0)
        threads = 1;
    threads = std::min(threads, n);
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(threads);
    workers.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        workers.emplace_back([&, w]() {
            try {
                for (std::size_t i = w; i < n; i += threads)
                    fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

/// Worker cap from the RISKALLOC_THREADS environment variable; defaults to
/// the hardware concurrency when unset or unparsable.
inline std::size_t thread_cap_from_env() {
    const char* raw = std::getenv("RISKALLOC_THREADS");
    if (raw != nullptr) {
        char* end = nullptr;
        unsigned long v = std::strtoul(raw, &end, 10);
        if (end != raw && *end == '\0' && v > 0)
            return static_cast<std::size_t>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<std::size_t>(hw);
}

}  // namespace riskalloc
