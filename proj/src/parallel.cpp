#include "infkit/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace infkit {

unsigned
worker_count()
{
  if (const char* env = std::getenv("INFLUENCEKIT_THREADS")) {
    try {
      int v = std::stoi(env);
      if (v > 0)
        return static_cast<unsigned>(v);
    } catch (const std::exception&) {
      // fall through to the hardware count
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void
parallel_for(std::size_t n, const std::function<void(std::size_t)>& body)
{
  std::size_t workers = std::min<std::size_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      body(i);
    return;
  }
  std::atomic<std::size_t> next{ 0 };
  std::atomic<bool> stop{ false };
  std::exception_ptr first;
  std::mutex mu;
  auto run = [&] {
    for (;;) {
      if (stop.load(std::memory_order_relaxed))
        return;
      std::size_t i = next.fetch_add(1);
      if (i >= n)
        return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first)
          first = std::current_exception();
        stop = true;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w)
    pool.emplace_back(run);
  run();
  for (auto& t : pool)
    t.join();
  if (first)
    std::rethrow_exception(first);
}

} // namespace infkit
