#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fifa {

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Box-Muller standard normal built directly on mt19937_64, so streams
/// stay identical across standard libraries (std::normal_distribution is
/// implementation-defined).
class GaussianSampler {
public:
    explicit GaussianSampler(std::mt19937_64& rng) : rng_(rng) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform01(rng_);  // (0, 1]: keeps the log finite
        double u2 = uniform01(rng_);
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64& rng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fifa
