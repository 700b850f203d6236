// Copyright 2026 The TSG Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <string_view>
#include <thread>
#include <vector>

#include "tsg/core/error.hpp"

namespace tsg {

/// Worker count from TSG_THREADS; 1 when unset.
inline std::size_t worker_threads() {
  const char* env = std::getenv("TSG_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  const std::string_view s(env);
  std::size_t n = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
  if (ec != std::errc() || ptr != s.data() + s.size() || n == 0) {
    throw ConfigError(detail::concat("TSG_THREADS must be a positive integer, got '", s, "'"));
  }
  return n;
}

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Work is striped
/// by index, so any per-index output is independent of the thread count. If
/// several calls throw, the exception of the lowest index is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  threads = std::min(threads, n);
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) {
        try {
          fn(i);
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

}  // namespace tsg
