#pragma once

#include <cstddef>
#include <functional>

namespace maxsmooth {

// Worker-pool size used by parallel-capable stages. Defaults to the value of
// MAXSMOOTH_THREADS when set, else std::thread::hardware_concurrency().
std::size_t thread_count();
void set_thread_count(std::size_t n);

// Runs body(i) for i in [0, n). Each index is processed exactly once; callers
// write results into pre-sized slots so the outcome is independent of the
// number of threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace maxsmooth
