#pragma once

// Counter-based random streams.
//
// Every Brownian increment is a pure function of (base seed, path index,
// global step index, attempt index, stream tag), so results never depend on
// the order in which paths are processed or on how many threads do the work.

#include <array>
#include <cstdint>
#include <limits>

namespace mmmc {

/// SplitMix64 finalizer; used to derive keys and replicate seeds.
[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed of the r-th independent replicate derived from a base seed.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(base) ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
[[nodiscard]] constexpr PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key) noexcept {
    constexpr std::uint32_t kM0 = 0xD2511F53u;
    constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kW0;
            key[1] += kW1;
        }
        const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
}

/// Purpose of a stream; keeps e.g. initial sampling and dynamics independent.
enum class StreamTag : std::uint8_t {
    increments = 0,
    initial = 1,
    experiment = 2,
};

/// Uniform random bit generator over one (seed, path, step, attempt, tag) cell.
///
/// Satisfies std::uniform_random_bit_generator, so it plugs into the standard
/// and Boost distributions. Exhausting 2^32 blocks wraps, which no caller
/// comes close to.
class PathStream {
public:
    using result_type = std::uint32_t;

    PathStream(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint32_t attempt,
               StreamTag tag = StreamTag::increments) noexcept {
        const std::uint64_t k = splitmix64(seed);
        key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
        // Steps and paths beyond 2^32 alias; attempts beyond 2^24 alias.
        ctr_ = {0u, (attempt & 0x00FFFFFFu) | (std::uint32_t{static_cast<std::uint8_t>(tag)} << 24),
                static_cast<std::uint32_t>(step) ^ static_cast<std::uint32_t>(step >> 32),
                static_cast<std::uint32_t>(path) ^ static_cast<std::uint32_t>(path >> 32)};
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (pos_ == 4) {
            block_ = philox4x32(ctr_, key_);
            ++ctr_[0];
            pos_ = 0;
        }
        return block_[pos_++];
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() noexcept {
        const std::uint64_t hi = (*this)();
        const std::uint64_t lo = (*this)();
        return static_cast<double>(((hi << 32) | lo) >> 11) * 0x1.0p-53;
    }

private:
    PhiloxKey key_{};
    PhiloxCounter ctr_{};
    PhiloxCounter block_{};
    unsigned pos_ = 4;
};

} // namespace mmmc
