#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "constants.hpp"

/// Counter-based random numbers. A stream is identified by a 64-bit key; the
/// n-th value of a stream is a pure function of (key, n), so results never
/// depend on scheduling or on how many values other streams consumed.
namespace dipoletrap {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t golden_gamma = 0x9e3779b97f4a7c15ULL;

/// Key of sub-stream `stream` under a master seed.
constexpr std::uint64_t derive_key(std::uint64_t master, std::uint64_t stream) noexcept
{
    return mix64(mix64(master ^ 0xd1b54a32d192ed03ULL) + (stream + 1) * golden_gamma);
}

constexpr std::uint64_t counter_bits(std::uint64_t key, std::uint64_t counter) noexcept
{
    return mix64(key + (counter + 1) * golden_gamma);
}

/// Uniform on [0, 1) with 53 random bits.
constexpr double counter_uniform(std::uint64_t key, std::uint64_t counter) noexcept
{
    return static_cast<double>(counter_bits(key, counter) >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on counters 2n and 2n+1.
inline double counter_normal(std::uint64_t key, std::uint64_t n) noexcept
{
    const double u1 = 1.0 - counter_uniform(key, 2 * n);  // (0, 1]
    const double u2 = counter_uniform(key, 2 * n + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * constants::pi * u2);
}

/// Sequential view of one stream. Satisfies UniformRandomBitGenerator, but
/// the member samplers below are preferred: they are bit-reproducible across
/// standard libraries.
class CounterRng
{
public:
    using result_type = std::uint64_t;

    explicit constexpr CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
        : key_(key), counter_(counter)
    {
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept { return counter_bits(key_, counter_++); }

    constexpr double uniform() noexcept { return counter_uniform(key_, counter_++); }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    double normal() noexcept
    {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * constants::pi * u2);
    }

    /// Exponential with unit mean.
    double exponential() noexcept { return -std::log(1.0 - uniform()); }

    constexpr std::uint64_t key() const noexcept { return key_; }
    constexpr std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

}  // namespace dipoletrap
