#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "funvar/errors.hpp"

namespace funvar {

/// Runs f(i) for i in [0, n) on up to `threads` workers. Each index is an
/// independent task; callers write results into per-index slots so the
/// outcome does not depend on scheduling. The exception of the lowest failing
/// index is rethrown.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Worker count: explicit value, else FUNVAR_THREADS, else 1.
inline std::size_t resolve_threads(std::optional<std::size_t> requested) {
  if (requested) {
    if (*requested == 0) throw invalid_input("thread count must be at least 1");
    return *requested;
  }
  if (const char* env = std::getenv("FUNVAR_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw invalid_input("FUNVAR_THREADS must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  return 1;
}

}  // namespace funvar
