#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace pcmsar {

// 64-bit FNV-1a, used to derive per-file sub-seeds from file names.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// splitmix64 finalizer; good avalanche, used for seed mixing.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Deterministic random source. mt19937_64 has a fully specified output
// sequence, and the uniform/normal layers below avoid the unspecified
// std::*_distribution implementations, so identical seeds give identical
// streams on every platform.
//
// Value semantics: copying an Rng copies its state; fork() derives an
// independent stream from (seed, index) without advancing the parent.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(mix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    Rng fork(std::uint64_t stream) const {
        return Rng(mix64(seed_ ^ mix64(stream + 1)));
    }

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Uniform index in [0, n). Modulo bias is ~n/2^64, irrelevant here.
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(next_u64() % n);
    }

    // Box-Muller; the second value of each pair is cached.
    double normal(double mean, double stddev) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
        double u2 = uniform();
        double mag = std::sqrt(-2.0 * std::log(u1));
        double ang = 2.0 * 3.14159265358979323846 * u2;
        spare_ = mag * std::sin(ang);
        have_spare_ = true;
        return mean + stddev * mag * std::cos(ang);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace pcmsar
