#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace uqmr {

/// splitmix64 finalizer; used to derive well-separated sub-seeds.
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derive a deterministic sub-seed from a master seed and a stream tag.
inline uint64_t derive_seed(uint64_t master, uint64_t tag) { return mix64(master ^ mix64(tag)); }

inline uint64_t derive_seed(uint64_t master, uint64_t tag1, uint64_t tag2) {
    return derive_seed(derive_seed(master, tag1), tag2);
}

/// Seeded generator with explicit uniform/normal transforms so that the
/// output stream depends only on the mt19937_64 engine, which is fully
/// specified by the standard.
class Rng {
  public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); rejection sampling keeps it unbiased.
    uint64_t below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return v % n;
    }

    /// Standard normal via Box-Muller; one spare value is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

  private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace uqmr
