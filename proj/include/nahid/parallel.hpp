#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace nahid {

/// Runs fn(i) for every i in [0, count) on up to `workers` threads. Items are
/// dealt round-robin, so callers get schedule-independent results as long as
/// each item writes only its own output slice.
template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
    const std::size_t threads = std::min<std::size_t>(std::max(1u, workers), count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < count; i += threads) fn(i);
        });
    }
}

/// Fixed row blocking used by the image passes. The block size never depends
/// on the worker count.
inline constexpr std::size_t kRowBlock = 16;

inline std::size_t row_blocks(std::size_t height) { return (height + kRowBlock - 1) / kRowBlock; }

} // namespace nahid
