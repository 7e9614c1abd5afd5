#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace simeck {

/// SIMECK_THREADS if set and positive, otherwise hardware concurrency.
inline unsigned default_thread_count()
{
    if (const char* env = std::getenv("SIMECK_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0)
                return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
    }
    return std::max(1U, std::thread::hardware_concurrency());
}

/// Runs body(begin, end, chunk) over `chunks` contiguous slices of [0, count).
/// Slicing depends only on `chunks`, never on `threads`.
template <class Body>
void parallel_chunks(std::size_t count, std::size_t chunks, unsigned threads, Body&& body)
{
    chunks = std::max<std::size_t>(1, std::min(chunks, std::max<std::size_t>(count, 1)));
    auto slice = [&](std::size_t c) {
        const std::size_t b = count * c / chunks;
        const std::size_t e = count * (c + 1) / chunks;
        body(b, e, c);
    };
    threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1U, threads), chunks));
    if (threads == 1) {
        for (std::size_t c = 0; c < chunks; ++c)
            slice(c);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t c = t; c < chunks; c += threads)
                    slice(c);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
            }
        });
    }
    for (auto& th : pool)
        th.join();
    if (error)
        std::rethrow_exception(error);
}

/// body(i) for every i in [0, count).
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body)
{
    const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(count, 8 * std::max(1U, threads)));
    parallel_chunks(count, chunks, threads, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t i = b; i < e; ++i)
            body(i);
    });
}

}  // namespace simeck
