#pragma once

// Reproducible random streams.
//
// Every stream is a std::mt19937_64 engine, whose output sequence is fixed by
// the standard. Variates are produced here rather than through <random>
// distributions, whose algorithms are implementation-defined, so a stream
// yields the same numbers on every conforming toolchain.
//
// Independent streams are keyed by (base seed, key, index) and mixed with
// SplitMix64 into the engine seed. Work items therefore own their streams and
// results do not depend on execution order.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace cbi {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// 64-bit FNV-1a, used to turn textual cell identifiers into stream keys.
inline constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t key,
                                           std::uint64_t index) {
    std::uint64_t s = splitmix64(base);
    s = splitmix64(s ^ key);
    return splitmix64(s ^ index);
}

class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on the open interval (0, 1), 53 bits of resolution.
    double uniform() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// 1 with probability p, via one uniform draw.
    int bernoulli(double p) { return uniform() < p ? 1 : 0; }

    /// Standard normal via Box-Muller; consumes exactly two uniforms.
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, bound) by rejection, bound > 0.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t r;
        do {
            r = engine_();
        } while (r >= limit);
        return r % bound;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace cbi
