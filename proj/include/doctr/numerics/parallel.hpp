#pragma once

#include <cstddef>
#include <functional>

namespace doctr {

/// Worker count: DOCTR_THREADS when set, else the hardware concurrency, at least 1.
int worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each index is
/// processed exactly once; results must be written to per-index slots so the
/// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace doctr
