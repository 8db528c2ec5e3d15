#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace scmr::detail {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Tasks are claimed in
// index order; if any throw, the exception of the lowest failing index is
// rethrown so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      if (failed.load()) continue;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        failed.store(true);
      }
    }
  };
  const auto count = static_cast<std::size_t>(std::max(1, workers));
  if (count == 1 || n <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(count, n); ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace scmr::detail
