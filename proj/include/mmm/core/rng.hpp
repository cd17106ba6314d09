#pragma once

#include <cstdint>
#include <string_view>

namespace mmm {

// SplitMix64 finalizer. Used both as the sequential generator step and as a
// stateless counter-based mixer, so every randomized quantity in the project
// is a pure function of integers and reproduces bit-for-bit on any platform.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// FNV-1a over raw bytes; the stable content hash for files and prompts.
constexpr std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Converts 53 top bits to a double in [0, 1).
constexpr double u64_to_unit(std::uint64_t v) {
    return static_cast<double>(v >> 11) * 0x1.0p-53;
}

// Sequential SplitMix64 stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() { return u64_to_unit(next_u64()); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [lo, hi], both ends inclusive. Rejection sampling
    // keeps the distribution exact.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1u;
        const std::uint64_t limit = ~0ull - (~0ull % span);
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return lo + static_cast<std::int64_t>(v % span);
    }

private:
    std::uint64_t state_;
};

} // namespace mmm
