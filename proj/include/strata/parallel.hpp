#pragma once

#include <cstddef>
#include <functional>

namespace strata {

/// Worker count from STRATA_THREADS (default: hardware concurrency, at least 1).
int thread_count();

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; the first exception (by index) is rethrown after all
/// workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int threads = thread_count());

} // namespace strata
