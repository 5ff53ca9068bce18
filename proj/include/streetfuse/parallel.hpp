#pragma once

#include <atomic>
#include <future>
#include <thread>
#include <vector>

namespace streetfuse {

// Runs fn(i) for i in [0, count) on a bounded pool. Results land in index
// order, so the output does not depend on scheduling; worker exceptions are
// rethrown on the caller's thread.
template <typename Fn>
auto parallel_map(std::size_t count, Fn&& fn, unsigned max_workers = 0)
    -> std::vector<decltype(fn(std::size_t{}))> {
  using Result = decltype(fn(std::size_t{}));
  std::vector<Result> results(count);
  if (count == 0) return results;
  unsigned workers = max_workers ? max_workers : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min(workers, static_cast<unsigned>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) results[i] = fn(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> futures;
  futures.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&]() {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        results[i] = fn(i);
      }
    }));
  }
  for (auto& f : futures) f.get();
  return results;
}

}  // namespace streetfuse
