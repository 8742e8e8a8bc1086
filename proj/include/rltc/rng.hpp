#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rltc {

// Deterministic RNG. mt19937_64 is bit-exact across standard libraries, but
// the standard distributions are not, so the uniform/normal transforms are
// spelled out here. Streams derived via split() depend only on the seed and
// the split key, never on how much of the parent stream was consumed.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed), seed_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1) with 53 significant bits
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // standard normal via Box-Muller (cached pair)
    double normal() {
        if (have_cache_) {
            have_cache_ = false;
            return cache_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        cache_ = r * std::sin(2.0 * M_PI * u2);
        have_cache_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    // uniform integer in [0, n), n >= 1
    uint64_t below(uint64_t n) {
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return v % n;
    }

    // child stream keyed by (stream, index); used to split per-chunk RNGs
    Rng split(uint64_t stream, uint64_t index) const {
        return Rng(mix(mix(seed_, stream), index));
    }

    static uint64_t mix(uint64_t a, uint64_t b) {
        // splitmix64 finalizer over the combined key
        uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 eng_;
    uint64_t seed_;
    double cache_ = 0.0;
    bool have_cache_ = false;
};

} // namespace rltc
