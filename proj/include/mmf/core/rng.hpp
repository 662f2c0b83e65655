#pragma once

#include <cmath>
#include <cstdint>

namespace mmf {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Mixes a seed with stream identifiers, so per-sample / per-step streams are
// independent of batch layout and loader scheduling.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t s = seed;
    splitmix64(s);
    s ^= 0x632BE59BD9B4E019ull * (a + 1);
    splitmix64(s);
    s ^= 0x9E6C63D0876A9A35ull * (b + 1);
    splitmix64(s);
    s ^= 0xC2B2AE3D27D4EB4Full * (c + 1);
    return splitmix64(s);
}

// Counter-based generator with a single u64 of state. Deterministic across
// platforms and trivially serializable into checkpoints.
struct Rng {
    std::uint64_t state = 0x853C49E6748FEA9Bull;
    bool have_gauss = false;
    double gauss_cache = 0.0;

    Rng() = default;
    explicit Rng(std::uint64_t seed) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        state = seed ^ 0x853C49E6748FEA9Bull;
        splitmix64(state);
        have_gauss = false;
        gauss_cache = 0.0;
    }

    std::uint64_t next_u64() { return splitmix64(state); }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [lo, hi] inclusive
    std::int64_t randint(std::int64_t lo, std::int64_t hi) {
        std::uint64_t span = std::uint64_t(hi - lo) + 1;
        return lo + std::int64_t(next_u64() % span);
    }

    // Box-Muller; hand-rolled so the stream is identical across stdlib versions.
    double normal() {
        if (have_gauss) {
            have_gauss = false;
            return gauss_cache;
        }
        double u1 = 0.0, u2 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 1e-300);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        gauss_cache = r * std::sin(a);
        have_gauss = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // normal, resampled until within [-2, 2] stddevs
    double trunc_normal(double mean, double stddev) {
        double x = normal();
        int guard = 0;
        while ((x < -2.0 || x > 2.0) && guard++ < 64) x = normal();
        return mean + stddev * x;
    }

    template <typename It>
    void shuffle(It first, It last) {
        auto n = last - first;
        for (auto i = n - 1; i > 0; --i) {
            auto j = randint(0, i);
            std::swap(first[i], first[j]);
        }
    }
};

}  // namespace mmf
