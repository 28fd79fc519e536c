#pragma once

// Fixed-order pairwise reductions. The tree shape depends only on the element
// count, so every reduction is reproducible bit for bit.

#include <cstddef>
#include <span>
#include <vector>

namespace mmmc {

inline constexpr std::size_t kPairwiseLeaf = 32;

namespace detail {

template <class Kernel>
void pairwise_rec(std::size_t begin, std::size_t end, std::size_t width, double* buf, Kernel& kernel) {
    if (end - begin <= kPairwiseLeaf) {
        for (std::size_t q = 0; q < width; ++q) buf[q] = 0.0;
        for (std::size_t i = begin; i < end; ++i) kernel(i, buf);
        return;
    }
    const std::size_t mid = begin + (end - begin) / 2;
    pairwise_rec(begin, mid, width, buf, kernel);
    pairwise_rec(mid, end, width, buf + width, kernel);
    for (std::size_t q = 0; q < width; ++q) buf[q] += buf[width + q];
}

} // namespace detail

/// Sums `width` accumulators over i in [0, n). `kernel(i, acc)` adds element
/// i's contribution into acc[0..width).
template <class Kernel>
[[nodiscard]] std::vector<double> pairwise_sums(std::size_t n, std::size_t width, Kernel&& kernel) {
    std::size_t depth = 1;
    for (std::size_t m = n; m > kPairwiseLeaf; m = m - m / 2) ++depth;
    std::vector<double> scratch(width * (depth + 1), 0.0);
    if (n > 0) detail::pairwise_rec(0, n, width, scratch.data(), kernel);
    scratch.resize(width);
    return scratch;
}

[[nodiscard]] inline double pairwise_sum(std::span<const double> values) {
    return pairwise_sums(values.size(), 1, [&](std::size_t i, double* acc) { acc[0] += values[i]; })[0];
}

} // namespace mmmc
