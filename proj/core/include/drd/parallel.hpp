#pragma once

#include <cstddef>
#include <functional>

namespace drd {

int default_threads();

// Runs body(i) for i in [0, n) on up to `threads` workers. Work is split into
// contiguous chunks; callers write results into per-index slots so output is
// independent of the worker count. The exception from the lowest failing
// index is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

}  // namespace drd
