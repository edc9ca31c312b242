#pragma once

#include <cstdint>
#include <random>

namespace umfa {

/// Seeded RNG with a fixed uniform mapping so initialization is
/// reproducible independent of the standard library's distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform in [0, 1) with 24 bits of resolution.
    float unit() {
        return static_cast<float>(gen_() >> 40) * (1.0f / 16777216.0f);
    }

    float uniform(float lo, float hi) { return lo + (hi - lo) * unit(); }

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return gen_() % n; }

private:
    std::mt19937_64 gen_;
};

}  // namespace umfa
