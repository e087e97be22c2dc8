#pragma once

#include <cstddef>
#include <functional>

namespace infkit {

//! Worker count: INFLUENCEKIT_THREADS when set to a positive integer, else
//! the hardware concurrency (at least 1).
unsigned worker_count();

//! Runs body(i) for every i in [0, n) on up to worker_count() threads.
//! Indices are claimed dynamically; the first exception thrown by any body
//! is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace infkit
