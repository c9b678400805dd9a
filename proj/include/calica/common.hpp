#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>

namespace calica {

/// Raised for malformed inputs, bad files or bad arguments. The CLI maps
/// this to exit code 1; anything else escaping to main is an internal
/// error and maps to exit code 2.
class UserError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file or text content; the message carries the location
/// (line number or byte offset) where known.
class ParseError : public UserError {
public:
    using UserError::UserError;
};

inline void warn(const std::string& msg) { std::cerr << "[warn] " << msg << "\n"; }
inline void info(const std::string& msg) { std::cerr << "[info] " << msg << "\n"; }

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Deterministic RNG used everywhere instead of <random> distributions,
/// which are not bit-identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Per-item seed derivation: mixes a master seed with an ordinal so that
/// items can be regenerated independently and reproducibly.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t ordinal) {
    return splitmix64(master ^ splitmix64(ordinal + 0x51559AC4D196233BULL));
}

}  // namespace calica
