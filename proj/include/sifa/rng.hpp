#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sifa {

inline uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// PCG32 (XSH-RR). Every stream of randomness in the project is one of these,
// derived from (seed, tag words) so that results never depend on call
// interleaving or worker scheduling. State is two u64s, trivially
// checkpointable, and identical across platforms.
class Rng {
public:
    Rng() : Rng(0x853c49e6748fea9bULL) {}

    explicit Rng(uint64_t seed, uint64_t stream = 0xda3e39cb94b95bdbULL) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31));
    }

    // Uniform in [0, 1), 24 bits of mantissa.
    double uniform() { return (next_u32() >> 8) * 0x1.0p-24; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u32() % static_cast<uint32_t>(hi - lo + 1));
    }

    // Box-Muller, drawing a fresh pair per call so there is no hidden cache
    // to carry through checkpoints.
    double gaussian() {
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    uint64_t state() const { return state_; }
    uint64_t inc() const { return inc_; }
    void restore(uint64_t state, uint64_t inc) { state_ = state; inc_ = inc; }

private:
    uint64_t state_;
    uint64_t inc_;
};

// Deterministic stream derivation: hash the seed with up to three tag words.
// Workers handling sample i derive from (seed, tag, i) and never share state.
inline Rng derive_rng(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t x = seed;
    uint64_t h1 = splitmix64(x);
    x ^= a * 0x9e3779b97f4a7c15ULL;
    uint64_t h2 = splitmix64(x);
    x ^= b * 0xc2b2ae3d27d4eb4fULL;
    uint64_t h3 = splitmix64(x);
    x ^= c * 0x165667b19e3779f9ULL;
    uint64_t h4 = splitmix64(x);
    return Rng(h1 ^ h3, h2 ^ h4);
}

} // namespace sifa
