#pragma once

#include <cstddef>
#include <functional>

namespace sola {

/// Worker count from SOLA_THREADS (0 or unset = hardware concurrency).
int worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Callers write
/// results into per-index slots and reduce them in index order afterwards, so
/// the outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace sola
