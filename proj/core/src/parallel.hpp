#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

#include "uedge/tensor.hpp"

namespace uedge::detail {

// Splits [0, count) into contiguous chunks, one per worker. Each index is
// handled by exactly one worker, so per-element reduction order is fixed.
template <typename Fn>
void parallel_for(std::int64_t count, Fn&& fn) {
  const auto workers = static_cast<std::int64_t>(std::min<std::int64_t>(num_threads(), count));
  if (workers <= 1) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  const std::int64_t chunk = (count + workers - 1) / workers;
  for (std::int64_t wkr = 1; wkr < workers; ++wkr) {
    const std::int64_t lo = wkr * chunk;
    const std::int64_t hi = std::min(count, lo + chunk);
    pool.emplace_back([lo, hi, &fn] {
      for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (std::int64_t i = 0; i < std::min(count, chunk); ++i) fn(i);
}

}  // namespace uedge::detail
