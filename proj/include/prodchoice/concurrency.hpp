#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

namespace prodchoice {

/// Value-or-exception slot for one element of a batched call.
template <class T>
struct Outcome {
  std::optional<T> value;
  std::exception_ptr error;

  bool ok() const noexcept { return !error; }
  const T& get() const {
    if (error) std::rethrow_exception(error);
    return *value;
  }
};

/// Runs fn(0..n-1) with at most `max_in_flight` calls active. Results are
/// returned in index order regardless of completion order.
template <class F>
auto bounded_map(std::size_t n, std::size_t max_in_flight, F&& fn)
    -> std::vector<Outcome<std::invoke_result_t<F&, std::size_t>>> {
  using R = std::invoke_result_t<F&, std::size_t>;
  std::vector<Outcome<R>> out(n);
  auto run_one = [&](std::size_t i) {
    try {
      out[i].value.emplace(fn(i));
    } catch (...) {
      out[i].error = std::current_exception();
    }
  };
  const std::size_t workers = std::min(n, std::max<std::size_t>(1, max_in_flight));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) run_one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) run_one(i);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace prodchoice
