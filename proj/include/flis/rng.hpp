#pragma once

// Deterministic random streams. Everything is built on SplitMix64 instead of
// <random> distributions because the standard distributions are
// implementation-defined, and reruns of a simulation must be byte-identical.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace flis {

inline constexpr std::uint64_t kSeedMixConst = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Folds stream tags into a base seed. Streams such as (seed, round, client)
// must never collide, so each part passes through the full mixer.
template <class... Parts>
std::uint64_t derive_seed(std::uint64_t base, Parts... parts) {
    std::uint64_t s = mix64(base + kSeedMixConst);
    ((s = mix64(s ^ (static_cast<std::uint64_t>(parts) + kSeedMixConst))), ...);
    return s;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += kSeedMixConst;
        return mix64(state_);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n). n must be >= 1.
    std::uint64_t below(std::uint64_t n) {
        std::uint64_t x, r;
        do {
            x = next_u64();
            r = x % n;
        } while (x - r > static_cast<std::uint64_t>(-1) - (n - 1));
        return r;
    }

    // Box-Muller; the second variate of each pair is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        cached_ = radius * std::sin(angle);
        has_cached_ = true;
        return radius * std::cos(angle);
    }

    // Marsaglia-Tsang; the alpha < 1 case boosts through Gamma(alpha + 1).
    double gamma(double alpha) {
        if (alpha < 1.0) {
            double u;
            do {
                u = uniform();
            } while (u <= 0.0);
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / (3.0 * std::sqrt(d));
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            double u;
            do {
                u = uniform();
            } while (u <= 0.0);
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
                return d * v;
            }
        }
    }

    std::vector<double> dirichlet(double alpha, std::size_t n) {
        std::vector<double> p(n);
        double total = 0.0;
        for (auto& v : p) {
            v = gamma(alpha);
            total += v;
        }
        for (auto& v : p) v /= total;
        return p;
    }

    // Fisher-Yates.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace flis
