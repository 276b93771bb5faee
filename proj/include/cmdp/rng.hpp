#pragma once

#include <cstdint>

namespace cmdp {

// SplitMix64. Small, fast, and statistically solid for simulation use. Each
// Monte Carlo sample draws from its own substream derived from (seed, index),
// so estimates are independent of how samples are partitioned across workers.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed) : state(seed) {}

    static Rng substream(std::uint64_t seed, std::uint64_t index) {
        Rng mixer(seed + 0x9e3779b97f4a7c15ULL * (index + 1));
        std::uint64_t a = mixer.next();
        return Rng(a ^ 0x6c62272e07bb0142ULL);
    }

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    double unit() { return (next() >> 11) * 0x1.0p-53; }
};

}  // namespace cmdp
