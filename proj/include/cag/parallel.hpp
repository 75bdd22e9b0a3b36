#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "cag/errors.hpp"

namespace cag {

/// Applies fn to every item on a bounded worker pool. Results keep input
/// order regardless of scheduling; the first exception wins and is rethrown
/// after all workers drain. fn must not mutate shared state.
template <typename In, typename Fn>
auto parallel_map(const std::vector<In>& items, int workers, Fn fn)
    -> std::vector<decltype(fn(items.front()))> {
  using Out = decltype(fn(items.front()));
  if (workers < 1) throw Error("worker count must be at least 1");
  std::vector<Out> results(items.size());
  if (items.empty()) return results;
  if (workers == 1 || items.size() == 1) {
    for (size_t i = 0; i < items.size(); ++i) results[i] = fn(items[i]);
    return results;
  }

  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mu;

  auto worker = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const size_t i = next.fetch_add(1);
      if (i >= items.size()) return;
      try {
        results[i] = fn(items[i]);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };

  const size_t n_threads =
      std::min(static_cast<size_t>(workers), items.size());
  std::vector<std::thread> threads;
  threads.reserve(n_threads);
  for (size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

}  // namespace cag
