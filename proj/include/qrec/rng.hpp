#pragma once

#include <cstdint>
#include <cmath>
#include <limits>
#include <random>
#include <string_view>
#include <vector>

namespace qrec {

// splitmix64 finalizer, used for seed fan-out and hash mixing.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// FNV-1a over the bytes of a string. Used instead of std::hash, whose result
// is implementation-defined and would break cross-platform reproducibility.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Derives an independent child seed from a base seed and a label, so a single
// top-level seed can fan out to every module without correlated streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    return splitmix64(splitmix64(base) ^ fnv1a64(tag));
}

// Deterministic random source. std::mt19937_64 has a standard-mandated output
// sequence, and the value transforms below are written out by hand because the
// std::*_distribution algorithms are implementation-defined. The same seed
// therefore reproduces every draw bit for bit on any conforming platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) by rejection.
    std::size_t uniform_index(std::size_t n) {
        const std::uint64_t nn = n;
        const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
        const std::uint64_t rem = (max % nn + 1) % nn;
        std::uint64_t x = gen_();
        while (rem != 0 && x > max - rem) x = gen_();
        return static_cast<std::size_t>(x % nn);
    }

    // Standard normal via Box-Muller; the paired value is served on the next call.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * kPi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Fisher-Yates shuffle driven by uniform_index.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static constexpr double kPi = 3.14159265358979323846;
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace qrec
