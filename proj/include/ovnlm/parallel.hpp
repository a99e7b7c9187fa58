#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace ovnlm {

// Worker count: OVNLM_THREADS caps it, 0 or unset means hardware concurrency.
std::size_t worker_count();

// Runs fn(begin, end) over disjoint chunks of [0, n). Each index is touched by
// exactly one worker, so per-index outputs are identical for any worker count.
void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace ovnlm
