#pragma once

#include <cstddef>
#include <functional>

namespace advrep {

/// Worker count honoring the ADVREP_THREADS cap (defaults to hardware concurrency).
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Each index is processed exactly once and the
/// body must only write to per-index outputs, so results do not depend on the
/// number of workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace advrep
