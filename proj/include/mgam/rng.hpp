#pragma once

#include <cstdint>
#include <random>

#include "mgam/special.hpp"

namespace mgam {

// Deterministic RNG wrapper. All variate generation in the library goes
// through explicit uniforms from this engine (never std::*_distribution,
// whose output is implementation-defined), so equal seeds give identical
// streams on any platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(mix(seed, 0x6d67616d /* "mgam" */)) {}

    std::uint64_t bits() { return eng_(); }

    // [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // (0, 1): safe input for inverse-CDF transforms.
    double uniform_open() {
        double u;
        do { u = uniform(); } while (u <= 0.0);
        return u;
    }

    double normal() { return normal_quantile(uniform_open()); }

    // splitmix64 finalizer; used to derive independent per-replicate seeds
    // from (master seed, stream index) without overlapping streams.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
        z ^= z >> 30; z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27; z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

  private:
    std::mt19937_64 eng_;
};

} // namespace mgam
