#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace xsdep {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Replication seed: a splitmix64 chain over (master, N, T, rep).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t n, std::uint64_t t, std::uint64_t rep) {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ n);
    h = splitmix64(h ^ (t + 0x632BE59BD9B4E019ULL));
    return splitmix64(h ^ (rep + 0x8CB92BA72F3D8DD7ULL));
}

/// Reserved replication index for the per-cell fixed design stream.
inline constexpr std::uint64_t kDesignStream = ~std::uint64_t{0};

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }

    /// Student-t with nu degrees of freedom rescaled to unit variance (nu > 2).
    double student_t_unit(double nu) {
        std::student_t_distribution<double> dist(nu);
        return dist(engine_) * std::sqrt((nu - 2.0) / nu);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace xsdep
