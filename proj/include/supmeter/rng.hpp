#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace supmeter {

/// xoshiro256++ generator seeded through splitmix64.
///
/// Every derived draw is defined in terms of next() so that other
/// implementations can regenerate the same datasets:
///   uniform()  = (next() >> 11) * 2^-53
///   below(n)   = Lemire multiply-shift with rejection
///   normal()   = Box-Muller cosine branch, one pair of uniforms per draw
///   shuffle()  = Fisher-Yates from the back, j = below(i + 1)
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next() noexcept;
    /// Uniform on [0, 1) with 53 random mantissa bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Uniform integer on [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept;
    double normal() noexcept;
    bool bernoulli(double p) noexcept { return uniform() < p; }
    void shuffle(std::span<std::size_t> values) noexcept;

    const std::array<std::uint64_t, 4>& state() const noexcept { return s_; }

private:
    std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Mixes a base seed with a tag and index into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0) noexcept;

}  // namespace supmeter
