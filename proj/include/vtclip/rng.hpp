// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace vtclip {

/// One step of SplitMix64; advances `state` and returns the mixed output.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives an independent 64-bit seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// xoshiro256** seeded from a single 64-bit value through SplitMix64.
///
/// Every draw the library makes goes through this generator, so results are
/// reproducible across compilers and standard libraries:
///   uniform()  = (next() >> 11) * 2^-53, in [0, 1)
///   gaussian() = sqrt(-2 ln(1 - u1)) * cos(2π u2), one value per two draws
///   below(n)   = next() % n, redrawing while next() falls in the final
///                partial bucket of size 2^64 mod n
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed);

    std::uint64_t next();
    std::uint64_t operator()() { return next(); }
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    double uniform();
    double gaussian();
    std::uint64_t below(std::uint64_t n);

    /// Fisher-Yates, drawing j = below(i + 1) for i from the back.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::array<std::uint64_t, 4> s_{};
};

}  // namespace vtclip
