#include "strata/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace strata {

int thread_count()
{
    if (const char* env = std::getenv("STRATA_THREADS")) {
        try {
            const int t = std::stoi(env);
            if (t >= 1) return t;
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// nested calls run inline on the calling worker
thread_local bool inside_pool = false;

} // namespace

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int threads)
{
    if (inside_pool) threads = 1;
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        inside_pool = true;
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace strata
