#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace qf {

// All randomness in the library flows through mt19937_64 plus the explicit
// transforms below. The std:: distribution classes are avoided on purpose:
// their output sequences are implementation-defined, which would break
// byte-identical reruns across standard libraries.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stable per-purpose seed derivation from one master seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    return splitmix64(splitmix64(base) ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
}

// Uniform in [0, 1), 53-bit resolution.
inline double uniform01(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& g, double lo, double hi) {
    return lo + (hi - lo) * uniform01(g);
}

// Standard normal via Box-Muller (one value per call; the pair's second
// member is discarded to keep consumption per call fixed).
inline double gauss(std::mt19937_64& g) {
    const double u1 = 1.0 - uniform01(g);  // (0, 1]
    const double u2 = uniform01(g);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace qf
