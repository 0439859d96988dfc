#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace dualinf {

// Deterministic, platform-independent generator (xoshiro256** seeded via
// splitmix64). std::mt19937 + std::normal_distribution would tie sample
// streams to the standard library implementation; this keeps them fixed
// by the build alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : state_) w = splitmix64(x);
        has_spare_ = false;
        spare_ = 0.0;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n), n > 0. Modulo bias is irrelevant at the n used here.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; the pair's second value is cached so
    // one call consumes one value of the stream on average.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Full internal state, for checkpointing. Layout: 4 state words,
    // has_spare flag, spare value bits.
    std::array<std::uint64_t, 6> save_state() const {
        std::array<std::uint64_t, 6> out{};
        for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(i)] = state_[static_cast<std::size_t>(i)];
        out[4] = has_spare_ ? 1u : 0u;
        out[5] = bit_cast_u64(spare_);
        return out;
    }

    void restore_state(const std::array<std::uint64_t, 6>& s) {
        for (int i = 0; i < 4; ++i) state_[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(i)];
        has_spare_ = s[4] != 0;
        spare_ = bit_cast_double(s[5]);
    }

    // Independent child stream; used to split data-loading noise from
    // model-parameter noise.
    Rng split() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ULL); }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
    static std::uint64_t bit_cast_u64(double d) {
        std::uint64_t u;
        static_assert(sizeof(u) == sizeof(d));
        __builtin_memcpy(&u, &d, sizeof(u));
        return u;
    }
    static double bit_cast_double(std::uint64_t u) {
        double d;
        __builtin_memcpy(&d, &u, sizeof(d));
        return d;
    }

    std::array<std::uint64_t, 4> state_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dualinf
