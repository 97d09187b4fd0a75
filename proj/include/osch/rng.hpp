#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace osch {

// All randomness in the library flows through RngStream. The generator is
// std::mt19937_64 (bit-exact across platforms by the standard) and every
// variate transform below is hand-rolled, because the std::*_distribution
// classes are implementation-defined and would break the reproducibility
// contract between compilers.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class RngStream {
  public:
    explicit RngStream(std::uint64_t key) : gen_(key) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform on (0,1); never returns 0 or 1.
    double uniform() {
        // 53-bit mantissa; shift keeps the top bits of the generator output.
        double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
        while (u <= 0.0) {
            u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
        }
        return u;
    }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

    /// Standard normal via Box-Muller; caches the second variate.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

  private:
    std::mt19937_64 gen_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// Deterministic seed derivation for nested work items.
inline std::uint64_t splitmix_combine(std::uint64_t seed, std::uint64_t id) {
    std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL + id);
    splitmix64(s);
    return splitmix64(s);
}

/// Derives an independent stream from a top-level seed and a list of stream
/// ids (study id, replica index, ...). Same inputs, same stream, regardless
/// of how many other streams were created in between.
inline RngStream make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t state = seed ^ 0xd1b54a32d192ed03ULL;
    splitmix64(state);
    for (std::uint64_t id : ids) {
        state ^= splitmix64(state) + id;
        splitmix64(state);
    }
    return RngStream(splitmix64(state));
}

} // namespace osch
