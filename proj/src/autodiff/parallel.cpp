#include "stalign/autodiff/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace stalign::ad {

namespace {

std::size_t threads_from_env() {
    const char* raw = std::getenv("STALIGN_THREADS");
    if (raw == nullptr) return 1;
    try {
        const long v = std::stol(raw);
        return v >= 1 ? static_cast<std::size_t>(v) : 1;
    } catch (const std::exception&) {
        return 1;
    }
}

std::atomic<std::size_t>& thread_cap() {
    static std::atomic<std::size_t> cap{threads_from_env()};
    return cap;
}

}  // namespace

std::size_t intra_op_threads() { return thread_cap().load(); }

void set_intra_op_threads(std::size_t n) { thread_cap().store(std::max<std::size_t>(1, n)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    const std::size_t threads = std::min(intra_op_threads(), n);
    // Small ranges are not worth a thread launch.
    if (threads <= 1 || n < 64) {
        fn(0, n);
        return;
    }
    const std::size_t chunk = (n + threads - 1) / threads;
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t) {
        const std::size_t b = t * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b < e) pool.emplace_back(fn, b, e);
    }
    fn(0, std::min(n, chunk));
    for (auto& th : pool) th.join();
}

}  // namespace stalign::ad
