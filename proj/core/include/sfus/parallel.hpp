#pragma once

#include <cstddef>
#include <functional>

namespace sfus {

/// SFUS_THREADS when set to a positive integer, else the hardware count (>= 1).
std::size_t worker_threads();

/// Runs fn(0..n-1) on up to `threads` workers. Results must be written by
/// index; the first exception thrown by any call is rethrown after all
/// workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t threads = worker_threads());

}  // namespace sfus
