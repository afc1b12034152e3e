// Deterministic random helpers. std::mt19937_64 output is pinned by the
// standard, but the standard distributions are not, so the transforms live
// here: identical seeds give identical streams on every platform.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace planrank {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Independent deterministic stream for (seed, stream index) pairs, e.g.
    /// one per query so generation order never matters.
    static Rng substream(std::uint64_t seed, std::uint64_t stream) {
        return Rng(splitmix64(seed ^ splitmix64(stream + 1)));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (no cached spare).
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Uniform integer in [0, n). Modulo bias is ~n/2^64, irrelevant here.
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace planrank
