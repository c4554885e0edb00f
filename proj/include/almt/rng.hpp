#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

namespace almt {

// Deterministic random source. std::mt19937_64 has a standardized bit stream
// and the distributions below are hand-rolled, so a given seed produces the
// same values on every platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Box-Muller; consumes two draws per value, no cached spare.
    double normal(double mean = 0.0, double stddev = 1.0) {
        // u1 in (0, 1] so the log is finite
        const double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    std::uint64_t bounded(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    // Fisher-Yates shuffle.
    template <typename It>
    void shuffle(It begin, It end) {
        const auto n = static_cast<std::uint64_t>(end - begin);
        for (std::uint64_t i = n; i > 1; --i) {
            const std::uint64_t j = bounded(i);
            std::swap(begin[i - 1], begin[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace almt
