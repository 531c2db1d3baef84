#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "lizero/common.hpp"

namespace lizero {

/// splitmix64 step; used to derive independent stream seeds from a master
/// seed so that adding a consumer never shifts another consumer's stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seeded generator with explicit, implementation-independent draw
/// functions. std::mt19937_64 itself is specified bit-exactly by the
/// standard; the helpers below avoid std::uniform_*_distribution, whose
/// output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). Lemire multiply-shift, no modulo bias.
    std::uint32_t next_below(std::uint32_t n) {
        require(n > 0, "next_below: n must be positive");
        std::uint64_t x = engine_() >> 32;
        std::uint64_t m = x * static_cast<std::uint64_t>(n);
        std::uint64_t l = m & 0xffffffffULL;
        if (l < n) {
            std::uint64_t t = (0x100000000ULL - n) % n;
            while (l < t) {
                x = engine_() >> 32;
                m = x * static_cast<std::uint64_t>(n);
                l = m & 0xffffffffULL;
            }
        }
        return static_cast<std::uint32_t>(m >> 32);
    }

    /// Uniform double in [lo, hi).
    double next_in(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    /// Index drawn from an (unnormalized is not allowed) probability vector
    /// by CDF walk in index order. Zero entries cannot be drawn.
    int next_categorical(std::span<const double> probs) {
        double u = next_double();
        double cum = 0.0;
        int last_positive = -1;
        for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
            if (probs[i] > 0.0) last_positive = i;
            cum += probs[i];
            if (u < cum) return i;
        }
        // u landed in float round-off past the last mass point
        return last_positive;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace lizero
