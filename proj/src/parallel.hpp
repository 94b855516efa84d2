#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace convflat {

inline int resolve_jobs(int jobs) {
    if (jobs > 0) return jobs;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
/// Exceptions are captured and the first one is rethrown on the caller.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = resolve_jobs(jobs);
    if (n <= 0) return;
    if (jobs == 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const int threads = std::min(jobs, n);
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

/// Parallel map with in-order emission: compute(i) may run on any thread,
/// emit(i) is called exactly once per index, in increasing index order, as
/// soon as the prefix 0..i is complete. Output built this way is identical
/// for any job count.
inline void parallel_for_ordered(int n, int jobs, const std::function<void(int)>& compute,
                                 const std::function<void(int)>& emit) {
    std::vector<char> done(static_cast<std::size_t>(std::max(n, 0)), 0);
    std::mutex m;
    int next_emit = 0;
    parallel_for(n, jobs, [&](int i) {
        compute(i);
        std::lock_guard<std::mutex> lock(m);
        done[i] = 1;
        while (next_emit < n && done[next_emit]) {
            emit(next_emit);
            ++next_emit;
        }
    });
}

} // namespace convflat
