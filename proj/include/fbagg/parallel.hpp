#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace fbagg {

/// Runs body(k) for k in [0, count) over contiguous chunks. The body must only
/// write to per-index state, so the result is independent of `threads`.
template <class Body>
void parallel_for(std::size_t count, std::size_t threads, Body&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  std::size_t chunk = (count + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        std::size_t lo = t * chunk, hi = std::min(count, lo + chunk);
        for (std::size_t k = lo; k < hi; ++k) body(k);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace fbagg
