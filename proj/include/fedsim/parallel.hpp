#pragma once

#include <cstddef>
#include <functional>

namespace fedsim {

/// Worker count: hardware concurrency, capped by FEDSIM_THREADS when set.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Results must
/// be written to per-index slots; the first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace fedsim
