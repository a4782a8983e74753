#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace adls {

/// Worker count used by parallel_for; 0 restores the hardware default.
void set_num_threads(int n);
int num_threads();

/// Runs fn(begin_i, end_i) on contiguous blocks of [begin, end). Results must
/// not depend on the partitioning; all drivers in this library write to
/// disjoint preallocated slots, so parallel and serial runs are bit-identical.
template <class Fn>
void parallel_for(std::int64_t begin, std::int64_t end, Fn&& fn) {
  const std::int64_t n = end - begin;
  if (n <= 0) return;
  const int workers = std::min<std::int64_t>(num_threads(), n);
  if (workers <= 1) {
    fn(begin, end);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  std::vector<std::exception_ptr> errors(workers);
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 1; w < workers; ++w) {
    const std::int64_t b = begin + w * chunk;
    const std::int64_t e = std::min(end, b + chunk);
    if (b >= e) break;
    threads.emplace_back([&fn, &errors, w, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  try {
    fn(begin, std::min(end, begin + chunk));
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& t : threads) t.join();
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

}  // namespace adls
