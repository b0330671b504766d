#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "../vec.hpp"

namespace sxt::detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Deterministic RNG built on the fully-specified mt19937_64 engine.
// std::uniform_real_distribution and friends are implementation-defined,
// so all mappings from raw engine output are done by hand: identical
// seeds give identical draw sequences everywhere.
class Rng {
  public:
    // seeds are diffused through splitmix64: raw sequential seeds leave
    // mt19937_64's early outputs visibly correlated
    explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // unbiased integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t r;
        do { r = eng_(); } while (r >= limit);
        return r % n;
    }

    bool coin() { return (eng_() & 1u) != 0; }

    // standard normal via Box-Muller, spare value cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    Vec3 unit_vector() {
        Vec3 v;
        do {
            v = {normal(), normal(), normal()};
        } while (v.norm2() < 1e-12);
        return v.normalized();
    }

    // uniform random rotation from a uniform unit quaternion
    Mat3 rotation() {
        double q[4];
        double n2;
        do {
            for (double& c : q) c = normal();
            n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
        } while (n2 < 1e-12);
        const double inv = 1.0 / std::sqrt(n2);
        return Mat3::from_quaternion(q[0] * inv, q[1] * inv, q[2] * inv, q[3] * inv);
    }

  private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sxt::detail
