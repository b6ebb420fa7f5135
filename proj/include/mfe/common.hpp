#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mfe {

// Library-wide error type. `code` is a stable machine-readable identifier
// (dot-separated, e.g. "lattice.order", "numeric.overflow"). Codes starting
// with "numeric." indicate runtime numerical failures; everything else is an
// input/usage error. The CLI maps these prefixes to exit codes.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }
    bool is_numeric() const noexcept { return code_.rfind("numeric.", 0) == 0; }

private:
    std::string code_;
};

// One validation finding; validate_scenario collects all of them instead of
// stopping at the first.
struct Violation {
    std::string code;
    std::string message;
};

// Pairwise (tree) summation. Bounds the floating error of long reductions to
// O(log n) ulps, which keeps the market-clearing residual a sharp bug trap
// instead of an accumulation artifact. Deterministic for a fixed input order.
inline double pairwise_sum(const double* x, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& x) {
    return pairwise_sum(x.data(), x.size());
}

// log(exp(a) + exp(b)) with max shift; tolerates -inf inputs.
inline double log_sum_exp2(double a, double b) {
    if (a < b) std::swap(a, b);
    if (b == -std::numeric_limits<double>::infinity()) return a;
    return a + std::log1p(std::exp(b - a));
}

// Max-shifted log-sum-exp over a small buffer.
inline double log_sum_exp(const double* x, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > m) m = x[i];
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
    return m + std::log(s);
}

// SplitMix64: tiny counter-based generator with splittable streams.
// Stream derivation contract (documented, relied on for reproducibility):
//   stream(seed)                  : state = mix(seed)
//   stream(seed, a)               : state = mix(mix(seed) ^ golden*a')
//   stream(seed, a, b)            : one more mixing round per index
// where each index is first avalanche-mixed, so (seed, replication, agent)
// maps to statistically independent streams regardless of loop order or
// thread schedule.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(mix(seed)) {}

    SplitMix64(std::uint64_t seed, std::uint64_t a)
        : state_(mix(mix(seed) ^ mix(a + 0x9e3779b97f4a7c15ULL))) {}

    SplitMix64(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
        : state_(mix(mix(mix(seed) ^ mix(a + 0x9e3779b97f4a7c15ULL)) ^
                     mix(b + 0x6a09e667f3bcc909ULL))) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Bernoulli(p) draw.
    bool next_bernoulli(double p) { return next_double() < p; }

    // Index draw from a small discrete distribution (weights need not be
    // normalized). Deterministic tie handling: first bucket whose cumulative
    // weight exceeds the uniform draw.
    std::size_t next_index(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = next_double() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return weights.empty() ? 0 : weights.size() - 1;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

// FNV-1a 64-bit content hash; used to stamp outputs with the scenario
// fingerprint so paired files can be associated and reruns verified.
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace mfe
