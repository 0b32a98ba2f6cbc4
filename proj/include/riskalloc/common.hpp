#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace riskalloc {

// Validation and runtime failures carry a dedicated type each so callers can
// map them to exit codes without parsing messages.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LengthMismatch : Error { using Error::Error; };
struct NonPositiveWeight : Error { using Error::Error; };
struct WeightSumOutOfRange : Error { using Error::Error; };
struct Misalignment : Error { using Error::Error; };
struct InfeasibleEnvelope : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct SlaterNotVerified : Error { using Error::Error; };
struct NonconcaveUtility : Error { using Error::Error; };
struct InadmissiblePolicy : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct NegativeMultiplier : Error { using Error::Error; };
struct GridTooLarge : Error { using Error::Error; };
struct EmptyTrace : Error { using Error::Error; };

/**
 * @brief Deterministic 64-bit generator (splitmix64).
 *
 * Every random draw in the library flows from one u64 seed through this
 * generator, so results are reproducible across platforms, runs, and thread
 * counts. Streams for independent subtasks are derived with derive_seed.
 */
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform draw in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform index in [0, n). n = 0 returns 0.
    std::size_t index(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(next() % n); }

private:
    std::uint64_t state_;
};

/// Stable stream derivation: distinct (seed, stream) pairs give independent
/// generators without coupling consecutive streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    SplitMix64 g(seed ^ (0xd1342543de82ef95ull * (stream + 1)));
    g.next();
    return g.next();
}

/**
 * @brief Compensated accumulator for fixed-order reductions.
 *
 * Keeps an error-free running tail (two_sum) and splits products exactly via
 * fma, so weighted sums are reproducible bit for bit in a fixed traversal
 * order and exact to the final rounding for all practical inputs. Every
 * expectation-type reduction in the library goes through this type in
 * ascending atom-index order.
 */
class StableSum {
public:
    void add(double x) {
        double s = hi_ + x;
        double z = s - hi_;
        // exact residual of the addition
        lo_ += (hi_ - (s - z)) + (x - z);
        hi_ = s;
    }

    void add_product(double a, double b) {
        double p = a * b;
        lo_ += std::fma(a, b, -p);
        add(p);
    }

    double value() const { return hi_ + lo_; }

private:
    double hi_ = 0.0;
    double lo_ = 0.0;
};

/// Fixed-order compensated dot product sum_i a[i] * b[i].
inline double stable_dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw LengthMismatch("stable_dot: operand lengths differ");
    StableSum s;
    for (std::size_t i = 0; i < a.size(); ++i)
        s.add_product(a[i], b[i]);
    return s.value();
}

/// Fixed-order compensated triple product sum_i a[i] * b[i] * c[i].
inline double stable_dot3(std::span<const double> a, std::span<const double> b,
                          std::span<const double> c) {
    if (a.size() != b.size() || a.size() != c.size())
        throw LengthMismatch("stable_dot3: operand lengths differ");
    StableSum s;
    for (std::size_t i = 0; i < a.size(); ++i)
        s.add_product(a[i] * b[i], c[i]);
    return s.value();
}

inline double stable_total(std::span<const double> a) {
    StableSum s;
    for (double x : a)
        s.add(x);
    return s.value();
}

}  // namespace riskalloc
