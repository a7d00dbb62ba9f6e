#pragma once

#include <cstddef>
#include <functional>

namespace stalign::ad {

/// Intra-op thread cap, read once from STALIGN_THREADS (default 1).
std::size_t intra_op_threads();
/// Overrides the cap for the rest of the process (tests, CLI flags).
void set_intra_op_threads(std::size_t n);

/// Runs fn(begin, end) over contiguous chunks of [0, n). Each index belongs to
/// exactly one chunk and chunk boundaries depend only on n and the thread
/// cap, so results are bit-identical to the serial run when fn writes
/// disjoint outputs.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace stalign::ad
