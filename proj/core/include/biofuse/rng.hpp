#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace biofuse {

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// bit-identical across platforms and standard libraries; every random
// behavior in the toolkit flows from one of these, seeded from config.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& s : state_) s = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n) {
        // Lemire-style rejection to stay unbiased.
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (lo < threshold) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Standard normal via Box-Muller (no cached spare, keeps the stream
    // position a pure function of the call count).
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Derive an independent deterministic substream. The tag keeps streams
    // for different purposes (init, dropout, shuffle, ...) decoupled even
    // when forked from the same parent seed.
    Rng fork(std::string_view tag) {
        std::uint64_t h = 0x9e3779b97f4a7c15ull;
        for (const char c : tag) h = (h ^ static_cast<std::uint64_t>(c)) * 0x100000001b3ull;
        return Rng(next_u64() ^ h);
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t state_[4];
};

}  // namespace biofuse
