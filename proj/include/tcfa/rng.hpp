#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tcfa {

// splitmix64 finalizer. Used to whiten seeds and to derive child streams.
inline std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stage seed depends only on (master, stage name), so adding a stage to the
// pipeline never perturbs the seeds of existing stages.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stage) {
    return mix_seed(master ^ fnv1a64(stage));
}

// Indexed sub-stream (per tree, per sample, per sweep point).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return mix_seed(master + 0x9e3779b97f4a7c15ULL * (index + 1));
}

// mt19937_64 engine with hand-rolled transforms. std::uniform_*_distribution
// is not pinned by the standard; these transforms are, which keeps seeded
// runs bit-reproducible across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(mix_seed(seed)) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) by bitmask rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n <= 1) return 0;
        std::uint64_t range = n - 1;
        std::uint64_t mask = ~std::uint64_t{0} >> __builtin_clzll(range | 1);
        for (;;) {
            std::uint64_t r = next_u64() & mask;
            if (r < n) return r;
        }
    }

    // Box-Muller; consumes two uniforms per call.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
        return mean + stddev * z;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_int(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace tcfa
