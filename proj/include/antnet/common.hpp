#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace antnet {

using i64 = std::int64_t;
using u64 = std::uint64_t;

// Error taxonomy used across the library. CLI maps config/usage problems to
// exit 2 and data/manifest problems to exit 3.
class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

class GeometryError : public std::runtime_error {
public:
    explicit GeometryError(const std::string& what) : std::runtime_error(what) {}
};

class CapabilityError : public std::runtime_error {
public:
    explicit CapabilityError(const std::string& what) : std::runtime_error(what) {}
};

class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, i64 line)
        : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    i64 line() const { return line_; }

private:
    i64 line_;
};

class ManifestError : public std::runtime_error {
public:
    explicit ManifestError(const std::string& what) : std::runtime_error(what) {}
};

inline i64 conv_out_dim(i64 in, i64 kernel, i64 stride, i64 padding) {
    const i64 span = in + 2 * padding - kernel;
    if (span < 0) return 0;
    return span / stride + 1;
}

// Deterministic PRNG. mt19937_64 is fully specified by the standard and the
// uniform mapping below avoids std::uniform_real_distribution, whose output
// is implementation-defined.
class Rng {
public:
    explicit Rng(u64 seed) : state_(seed) {}

    // in [0, 1)
    double uniform() { return static_cast<double>(state_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    u64 next_u64() { return state_(); }

    // in [0, n)
    i64 next_index(i64 n) { return static_cast<i64>(state_() % static_cast<u64>(n)); }

private:
    std::mt19937_64 state_;
};

}  // namespace antnet
