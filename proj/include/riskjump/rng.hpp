#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace riskjump {

// SplitMix64 step; used both as a stream generator and as a seed mixer.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Per-path random stream: the state is a pure function of (seed, path index),
// so path k of an N-path run equals path k of a 2N-path run, and results are
// identical no matter how paths are distributed over threads.
class PathRng {
public:
    PathRng(std::uint64_t seed, std::uint64_t path_index) {
        std::uint64_t s = seed ^ (0xD1B54A32D192ED03ULL * (path_index + 1));
        // a few warm-up rounds decorrelate nearby path indices
        splitmix64(s);
        splitmix64(s);
        state_ = splitmix64(s);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform draw in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform draw in (0, 1), safe as a log argument.
    double uniform_open() {
        return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
    }

    // Standard normal via Box-Muller; pairs are cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Exponential waiting time with the given rate.
    double exponential(double rate) { return -std::log(uniform_open()) / rate; }

private:
    std::uint64_t state_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace riskjump
