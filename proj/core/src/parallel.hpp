#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "cfsteer/error.hpp"

namespace cfsteer::detail {

/// Calls fn(i) for i in [0, n) on up to `workers` threads. Results must be
/// written by index; the first exception is rethrown after all threads join.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

/// Runs fn(), prefixing engine errors with the example they came from.
template <typename Fn>
decltype(auto) for_example(const std::string& id, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError("example " + id + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument("example " + id + ": " + e.what());
  }
}

}  // namespace cfsteer::detail
