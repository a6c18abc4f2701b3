#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace tomoclass {

//! Worker count: TOMOCLASS_THREADS if set and positive, else logical cores.
inline unsigned default_workers()
{
    if (char const* env = std::getenv("TOMOCLASS_THREADS"))
    {
        try
        {
            int const n = std::stoi(env);
            if (n > 0)
                return static_cast<unsigned>(n);
        }
        catch (std::exception const&)
        {
        }
    }
    unsigned const hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/*!
 * Run `body(i)` for i in [0, n) on up to `workers` threads.
 *
 * Indices are handed out in static contiguous blocks; callers write results
 * into slot i so the output never depends on the worker count. The first
 * exception thrown by any worker is rethrown on the calling thread.
 */
template<class F>
void parallel_for(std::size_t n, unsigned workers, F&& body)
{
    if (workers == 0)
        workers = default_workers();
    std::size_t const nthreads = std::min<std::size_t>(workers, n);
    if (nthreads <= 1)
    {
        for (std::size_t i = 0; i < n; ++i)
            body(i);
        return;
    }

    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    threads.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t)
    {
        std::size_t const begin = n * t / nthreads;
        std::size_t const end = n * (t + 1) / nthreads;
        threads.emplace_back([&, begin, end] {
            try
            {
                for (std::size_t i = begin; i < end; ++i)
                    body(i);
            }
            catch (...)
            {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error)
                    error = std::current_exception();
            }
        });
    }
    for (auto& th : threads)
        th.join();
    if (error)
        std::rethrow_exception(error);
}

}  // namespace tomoclass
