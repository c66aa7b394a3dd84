#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace gms {

/// Seeded generator with a fully specified output stream.
///
/// Bits come from std::mt19937_64, whose sequence is fixed by the C++
/// standard. The real-valued draws are computed here rather than with the
/// <random> distributions, whose algorithms are implementation-defined:
///
///   uniform():  (x >> 11) * 2^-53, in [0, 1)
///   normal():   Box-Muller on two uniforms u1, u2 with u1 mapped to (0, 1]:
///               sqrt(-2 ln u1) * cos(2 pi u2), then the sine branch is
///               returned by the next call.
///
/// A Python port reproducing these formulas on numpy's MT19937-64 output
/// yields identical streams.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace gms
