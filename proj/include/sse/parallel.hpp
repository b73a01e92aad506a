#pragma once

#include <cstddef>
#include <functional>

namespace sse {

/// Worker count from SSE_THREADS (0 or unset = hardware concurrency).
std::size_t thread_count();

/// Runs body(begin, end) over disjoint chunks of [0, n). Chunks write to
/// disjoint outputs only, so results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 1024);

}  // namespace sse
