#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace evkd {

/// Deterministic random source. The engine (std::mt19937_64) has a fully
/// specified sequence; the distributions below are hand-rolled so that
/// generated values do not depend on the standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        // modulo bias is negligible for n << 2^64 and keeps the draw count fixed
        return n == 0 ? 0 : engine_() % n;
    }

    int uniform_int(int lo, int hi_inclusive) {
        return lo + static_cast<int>(uniform_index(
                        static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
    }

    bool coin() { return (engine_() & 1u) != 0; }

    /// Standard normal via Box-Muller (one value per call, cached pair dropped
    /// to keep the draw count deterministic and easy to reason about).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    /// Normal truncated to [-2 std, 2 std] around the mean, by rejection.
    double truncated_normal(double mean, double std) {
        for (;;) {
            double z = normal();
            if (z >= -2.0 && z <= 2.0) return mean + std * z;
        }
    }

    /// Poisson sample; Knuth's method for small means, normal approximation
    /// above. Means used by the event generator are per-time-step and small.
    std::uint64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        if (mean < 64.0) {
            const double limit = std::exp(-mean);
            double prod = 1.0;
            std::uint64_t n = 0;
            do {
                prod *= uniform();
                ++n;
            } while (prod > limit);
            return n - 1;
        }
        double v = std::round(normal(mean, std::sqrt(mean)));
        return v < 0.0 ? 0 : static_cast<std::uint64_t>(v);
    }

    std::string save_state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void load_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

private:
    std::mt19937_64 engine_;
};

/// splitmix64; used to derive independent per-item seeds from a master seed.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace evkd
