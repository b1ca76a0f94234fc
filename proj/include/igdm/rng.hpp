#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace igdm {

// Deterministic random numbers.  Everything random in this library is drawn
// from splitmix64 streams with hand-rolled uniform/normal mappings, so a seed
// produces bit-identical values on every platform; the standard <random>
// distributions make no such promise.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Folds a tag sequence into a seed so independent purposes (init, batch
// shuffle, attack start, probe noise, ...) get decorrelated streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t s = seed;
    for (std::uint64_t t : tags) {
        s ^= splitmix64(t) + 0x9E3779B97F4A7C15ULL + (s << 6) + (s >> 2);
    }
    return s;
}

class rng {
  public:
    explicit rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

    // Box-Muller, cosine branch only; two draws per variate keeps the stream
    // position independent of any cached state.
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n).  Rejection-free modulo is fine here: n is
    // always tiny compared to 2^64, the bias is far below anything observable.
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  private:
    std::uint64_t state_;
};

}  // namespace igdm
