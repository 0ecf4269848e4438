#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tsgps {

/// Deterministic random source, reproducible across platforms.
///
/// Engine: std::mt19937_64 (bit-exact by the C++ standard). All value
/// transforms are implemented here explicitly instead of through the
/// standard <random> distributions, whose output is implementation
/// defined:
///   - uniform():  (x >> 11) * 2^-53, in [0,1)
///   - normal():   Box-Muller, sqrt(-2 ln u1) * cos(2 pi u2)
///   - index(n):   unbiased rejection sampling on next_u64()
/// Named sub-streams are derived with derive(), which mixes an FNV-1a
/// hash of the stream name into the original seed via splitmix64, so
/// e.g. the shuffle stream never shares state with the dropout stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// Standard normal via Box-Muller (one value per two uniforms).
    double normal() {
        double u1 = 1.0 - uniform(); // (0,1], keeps log() finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) {
        return mean + stddev * normal();
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Unbiased index in [0, n).
    std::size_t index(std::size_t n) {
        if (n == 0) return 0;
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = gen_();
        while (x >= limit) x = gen_();
        return static_cast<std::size_t>(x % n);
    }

    /// Fisher-Yates shuffle using index().
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Independent stream derived from the original seed and a name.
    /// Does not consume state from this generator.
    Rng derive(std::string_view name) const {
        return Rng(splitmix64(seed_ ^ fnv1a64(name)));
    }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    static std::uint64_t fnv1a64(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

} // namespace tsgps
