#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

namespace backfill {

/// Stream families. Each simulated quantity draws from its own family so
/// that changing one part of a design (e.g. the backfill policy) does not
/// shift the random numbers consumed by another.
enum class StreamTag : std::uint64_t {
    Replicate = 1,
    Escalation = 2,
    Backfill = 3,
    Activity = 4,
    Fit = 5,
    Benchmark = 6,
};

constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept
{
    state += 0x9e3779b97f4a7c15ULL;
    return mix64(state);
}

/// Hashes a root seed and a path of integer keys into a new 64-bit seed.
/// Distinct paths give statistically unrelated seeds.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept;

/// FNV-1a over a string; used to key streams by scenario label.
std::uint64_t hash_label(std::string_view label) noexcept;

// xoshiro256++ seeded through splitmix64. Satisfies UniformRandomBitGenerator.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(std::uint64_t seed) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept;

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Standard normal via the polar method.
    double normal() noexcept;

private:
    std::array<std::uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline Xoshiro256 make_stream(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept
{
    return Xoshiro256(derive_seed(root, path));
}

constexpr std::uint64_t tag(StreamTag t) noexcept { return static_cast<std::uint64_t>(t); }

} // namespace backfill
