#pragma once

#include <cstddef>
#include <functional>

namespace aoiseg {

/// Resolves an effective worker count. requested = 0 means auto (hardware
/// concurrency). The AOISEG_THREADS environment variable, when set to a
/// positive value, caps the result. Never returns less than 1.
unsigned resolve_threads(unsigned requested);

/// Runs fn(begin, end) over [0, n) split into contiguous chunks, one per
/// worker. Chunk boundaries depend only on (n, threads), so any computation
/// whose per-index work is independent produces output identical to a
/// sequential run.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace aoiseg
