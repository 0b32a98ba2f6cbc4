#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "riskalloc/common.hpp"
#include "riskalloc/scenario.hpp"

namespace riskalloc {

enum class RiskKind { Expectation, CVaR, MAD, MeanCVaR, BoxMean };

inline const char* risk_kind_name(RiskKind k) {
    switch (k) {
        case RiskKind::Expectation: return "expectation";
        case RiskKind::CVaR: return "cvar";
        case RiskKind::MAD: return "mad";
        case RiskKind::MeanCVaR: return "mean_cvar";
        case RiskKind::BoxMean: return "box_mean";
    }
    return "?";
}

/**
 * @brief Coherent risk functional given by its density envelope.
 *
 * Every supported kind is the support function of a weakly compact convex
 * density set: rho(Z) = sup { E[zeta Z] : zeta admissible }, and the lower
 * counterpart -rho(-Z) = inf over the same set. envelope_gamma() bounds
 * ||zeta||_inf over the envelope and is what the mixing and certification
 * code uses to size test densities.
 *
 * Parameters are validated at construction. The degenerate parameter choices
 * (CVaR beta = 1, MAD lambda = 0, MeanCVaR theta = 1) keep their declared
 * kind but are evaluated through the expectation path so they agree with
 * Expectation bitwise.
 */
class RiskSpec {
public:
    static RiskSpec expectation() { return RiskSpec(RiskKind::Expectation); }

    static RiskSpec cvar(double beta) {
        if (!(beta > 0.0) || beta > 1.0 || !std::isfinite(beta))
            throw DomainError("cvar: beta must lie in (0, 1]");
        RiskSpec r(RiskKind::CVaR);
        r.beta_ = beta;
        return r;
    }

    static RiskSpec mad(double lambda) {
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw DomainError("mad: lambda must be nonnegative");
        RiskSpec r(RiskKind::MAD);
        r.lambda_ = lambda;
        return r;
    }

    static RiskSpec mean_cvar(double theta, double beta) {
        if (!(theta >= 0.0) || theta > 1.0 || !std::isfinite(theta))
            throw DomainError("mean_cvar: theta must lie in [0, 1]");
        if (!(beta > 0.0) || beta > 1.0 || !std::isfinite(beta))
            throw DomainError("mean_cvar: beta must lie in (0, 1]");
        RiskSpec r(RiskKind::MeanCVaR);
        r.theta_ = theta;
        r.beta_ = beta;
        return r;
    }

    static RiskSpec box_mean(std::vector<double> lo, std::vector<double> hi) {
        if (lo.size() != hi.size() || lo.empty())
            throw LengthMismatch("box_mean: bound vectors must have equal positive length");
        for (std::size_t k = 0; k < lo.size(); ++k) {
            if (!std::isfinite(lo[k]) || !std::isfinite(hi[k]) || lo[k] > hi[k])
                throw DomainError("box_mean: needs finite per-atom bounds with a <= b");
        }
        RiskSpec r(RiskKind::BoxMean);
        r.box_lo_ = std::move(lo);
        r.box_hi_ = std::move(hi);
        return r;
    }

    RiskKind kind() const { return kind_; }
    double beta() const { return beta_; }
    double lambda() const { return lambda_; }
    double theta() const { return theta_; }
    const std::vector<double>& box_lo() const { return box_lo_; }
    const std::vector<double>& box_hi() const { return box_hi_; }

    /// Uniform bound on |zeta_k| over the envelope: 1, 1/beta, 1+2*lambda,
    /// max(1, 1/beta), or the largest box bound magnitude.
    double envelope_gamma() const {
        switch (kind_) {
            case RiskKind::Expectation: return 1.0;
            case RiskKind::CVaR: return 1.0 / beta_;
            case RiskKind::MAD: return 1.0 + 2.0 * lambda_;
            case RiskKind::MeanCVaR: return std::max(1.0, 1.0 / beta_);
            case RiskKind::BoxMean: {
                double g = 0.0;
                for (std::size_t k = 0; k < box_lo_.size(); ++k)
                    g = std::max({g, std::abs(box_lo_[k]), std::abs(box_hi_[k])});
                return g;
            }
        }
        return 1.0;
    }

private:
    explicit RiskSpec(RiskKind k) : kind_(k) {}

    RiskKind kind_;
    double beta_ = 1.0;
    double lambda_ = 0.0;
    double theta_ = 1.0;
    std::vector<double> box_lo_;
    std::vector<double> box_hi_;
};

using RiskVector = std::vector<RiskSpec>;

enum class Direction { Sup, Inf };

namespace detail {

/// Atom indices ordered by z descending, ties by ascending index.
inline std::vector<std::size_t> order_descending(const RandomVariable& z) {
    std::vector<std::size_t> idx(z.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (z[a] != z[b])
            return z[a] > z[b];
        return a < b;
    });
    return idx;
}

/// Maximizing CVaR density: fill 1/beta along descending z until mass beta is
/// spent; the boundary atom takes the fractional remainder so E[zeta] = 1.
/// A final renormalization absorbs the (<= 1e-12) drift of the weight total.
inline RandomVariable cvar_fill(const ScenarioSet& s, const RandomVariable& z, double beta) {
    RandomVariable zeta(s.size(), 0.0);
    double remaining = beta;
    for (std::size_t id : order_descending(z)) {
        if (remaining <= 0.0)
            break;
        double w = s.weight(id);
        double take = std::min(w, remaining);
        zeta[id] = take / (beta * w);
        remaining -= take;
    }
    double mass = stable_dot(s.weights(), zeta);
    if (mass > 0.0 && mass != 1.0) {
        for (double& v : zeta)
            v /= mass;
    }
    return zeta;
}

/// Maximizing box-mean density: start at the lower bounds and spend the
/// budget 1 - E[a] raising coordinates toward b along descending z.
inline RandomVariable box_fill(const ScenarioSet& s, const RandomVariable& z,
                               const std::vector<double>& lo, const std::vector<double>& hi) {
    if (lo.size() != s.size())
        throw Misalignment("box_mean: bounds not aligned with scenario set");
    double base = stable_dot(s.weights(), lo);
    double cap = stable_dot(s.weights(), hi);
    if (base > 1.0 + 1e-9 || cap < 1.0 - 1e-9)
        throw InfeasibleEnvelope("box_mean: mean-1 plane misses the bound box");
    RandomVariable zeta(lo);
    double budget = 1.0 - base;
    for (std::size_t id : order_descending(z)) {
        if (budget <= 0.0)
            break;
        double w = s.weight(id);
        double room = (hi[id] - lo[id]) * w;
        double take = std::min(room, budget);
        if (take > 0.0) {
            zeta[id] = lo[id] + take / w;
            budget -= take;
        }
    }
    return zeta;
}

inline RandomVariable mad_sign_density(const ScenarioSet& s, const RandomVariable& z,
                                       double lambda, double sign) {
    double mean = expectation(s, z);
    RandomVariable prime(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) {
        double d = z[k] - mean;
        prime[k] = d > 0.0 ? sign * lambda : (d < 0.0 ? -sign * lambda : 0.0);
    }
    double shift = expectation(s, prime);
    RandomVariable zeta(s.size());
    for (std::size_t k = 0; k < s.size(); ++k)
        zeta[k] = 1.0 + prime[k] - shift;
    return zeta;
}

}  // namespace detail

/**
 * @brief rho(Z): largest E[zeta Z] over the admissible density envelope.
 *
 * CVaR and BoxMean are evaluated through their maximizing fill (sort-based,
 * exact for finite sets); MAD through the closed formula
 * E[Z] + lambda E[|Z - E[Z]|]; MeanCVaR as the convex combination.
 */
inline double upper_evaluate(const RiskSpec& risk, const ScenarioSet& s, const RandomVariable& z) {
    require_aligned(s, z, "upper_evaluate");
    switch (risk.kind()) {
        case RiskKind::Expectation:
            return expectation(s, z);
        case RiskKind::CVaR: {
            if (risk.beta() == 1.0)
                return expectation(s, z);
            RandomVariable zeta = detail::cvar_fill(s, z, risk.beta());
            return stable_dot3(s.weights(), zeta, z);
        }
        case RiskKind::MAD: {
            double mean = expectation(s, z);
            if (risk.lambda() == 0.0)
                return mean;
            RandomVariable dev(s.size());
            for (std::size_t k = 0; k < s.size(); ++k)
                dev[k] = std::abs(z[k] - mean);
            return mean + risk.lambda() * expectation(s, dev);
        }
        case RiskKind::MeanCVaR: {
            if (risk.theta() == 1.0)
                return expectation(s, z);
            double cvar = upper_evaluate(RiskSpec::cvar(risk.beta()), s, z);
            return risk.theta() * expectation(s, z) + (1.0 - risk.theta()) * cvar;
        }
        case RiskKind::BoxMean: {
            RandomVariable zeta = detail::box_fill(s, z, risk.box_lo(), risk.box_hi());
            return stable_dot3(s.weights(), zeta, z);
        }
    }
    throw DomainError("upper_evaluate: unknown risk kind");
}

/// -rho(-Z): the lower envelope value inf E[zeta Z], always evaluated through
/// the upper routine on the negated variable.
inline double lower_evaluate(const RiskSpec& risk, const ScenarioSet& s, const RandomVariable& z) {
    RandomVariable neg(z.size());
    for (std::size_t k = 0; k < z.size(); ++k)
        neg[k] = -z[k];
    return -upper_evaluate(risk, s, neg);
}

/**
 * @brief Density attaining upper_evaluate (Sup) or lower_evaluate (Inf).
 *
 * The Inf direction reuses the Sup construction on -Z: the minimizing density
 * for Z is the maximizing density for its negation. Ties inside the sort are
 * broken by ascending atom index, so the output is deterministic.
 */
inline RandomVariable worst_case_density(const RiskSpec& risk, const ScenarioSet& s,
                                         const RandomVariable& z, Direction dir) {
    require_aligned(s, z, "worst_case_density");
    if (dir == Direction::Inf) {
        RandomVariable neg(z.size());
        for (std::size_t k = 0; k < z.size(); ++k)
            neg[k] = -z[k];
        return worst_case_density(risk, s, neg, Direction::Sup);
    }
    switch (risk.kind()) {
        case RiskKind::Expectation:
            return RandomVariable(s.size(), 1.0);
        case RiskKind::CVaR:
            if (risk.beta() == 1.0)
                return RandomVariable(s.size(), 1.0);
            return detail::cvar_fill(s, z, risk.beta());
        case RiskKind::MAD:
            if (risk.lambda() == 0.0)
                return RandomVariable(s.size(), 1.0);
            return detail::mad_sign_density(s, z, risk.lambda(), +1.0);
        case RiskKind::MeanCVaR: {
            if (risk.theta() == 1.0)
                return RandomVariable(s.size(), 1.0);
            RandomVariable zeta = detail::cvar_fill(s, z, risk.beta());
            for (double& v : zeta)
                v = risk.theta() + (1.0 - risk.theta()) * v;
            return zeta;
        }
        case RiskKind::BoxMean:
            return detail::box_fill(s, z, risk.box_lo(), risk.box_hi());
    }
    throw DomainError("worst_case_density: unknown risk kind");
}

/**
 * @brief Primal CVaR value inf_t { t + E[(Z - t)_+] / beta }.
 *
 * For a finite set the infimum is attained at one of the atom values, so the
 * exact minimum is found by scanning them. Serves as the independent route
 * against the envelope evaluation in the duality cross-check.
 */
inline double primal_cvar(double beta, const ScenarioSet& s, const RandomVariable& z) {
    if (!(beta > 0.0) || beta > 1.0)
        throw DomainError("primal_cvar: beta must lie in (0, 1]");
    require_aligned(s, z, "primal_cvar");
    double best = std::numeric_limits<double>::infinity();
    for (double t : z) {
        StableSum tail;
        for (std::size_t k = 0; k < s.size(); ++k) {
            double excess = z[k] - t;
            if (excess > 0.0)
                tail.add_product(s.weight(k), excess);
        }
        best = std::min(best, t + tail.value() / beta);
    }
    return best;
}

/// Membership test for the density envelope of a risk kind, within tol.
/// Used by certification and by the self-checks on worst_case_density.
inline bool is_envelope_admissible(const RiskSpec& risk, const ScenarioSet& s,
                                   const RandomVariable& zeta, double tol) {
    if (zeta.size() != s.size())
        return false;
    double mean = stable_dot(s.weights(), zeta);
    switch (risk.kind()) {
        case RiskKind::Expectation:
            for (double v : zeta)
                if (std::abs(v - 1.0) > tol)
                    return false;
            return true;
        case RiskKind::CVaR: {
            if (std::abs(mean - 1.0) > tol)
                return false;
            double cap = 1.0 / risk.beta();
            for (double v : zeta)
                if (v < -tol || v > cap + tol)
                    return false;
            return true;
        }
        case RiskKind::MAD: {
            // zeta = 1 + zeta' - E[zeta'] for some ||zeta'||_inf <= lambda iff
            // E[zeta] = 1 and the spread (max - min)/2 fits inside lambda.
            if (std::abs(mean - 1.0) > tol)
                return false;
            auto [lo, hi] = std::minmax_element(zeta.begin(), zeta.end());
            return (*hi - *lo) / 2.0 <= risk.lambda() + tol;
        }
        case RiskKind::MeanCVaR: {
            if (std::abs(mean - 1.0) > tol)
                return false;
            if (risk.theta() == 1.0) {
                for (double v : zeta)
                    if (std::abs(v - 1.0) > tol)
                        return false;
                return true;
            }
            double cap = 1.0 / risk.beta();
            for (double v : zeta) {
                double core = (v - risk.theta()) / (1.0 - risk.theta());
                if (core < -tol || core > cap + tol)
                    return false;
            }
            return true;
        }
        case RiskKind::BoxMean: {
            if (risk.box_lo().size() != s.size() || std::abs(mean - 1.0) > tol)
                return false;
            for (std::size_t k = 0; k < s.size(); ++k)
                if (zeta[k] < risk.box_lo()[k] - tol || zeta[k] > risk.box_hi()[k] + tol)
                    return false;
            return true;
        }
    }
    return false;
}

/**
 * @brief Seeded envelope-admissible density for probing.
 *
 * Box-with-mean kinds draw a uniform point in the box and shift it back onto
 * the mean-1 plane by bisection on a clamped offset (the clamped mean is
 * monotone in the offset, so the root is bracketed by the box bounds).
 */
inline RandomVariable random_envelope_density(const RiskSpec& risk, const ScenarioSet& s,
                                              SplitMix64& rng) {
    auto clamp_shift = [&](RandomVariable draw, auto lo_at, auto hi_at) {
        double shift_lo = -2.0 * risk.envelope_gamma() - 1.0;
        double shift_hi = 2.0 * risk.envelope_gamma() + 1.0;
        RandomVariable zeta(s.size());
        for (int iter = 0; iter < 200; ++iter) {
            double shift = 0.5 * (shift_lo + shift_hi);
            for (std::size_t k = 0; k < s.size(); ++k)
                zeta[k] = std::clamp(draw[k] + shift, lo_at(k), hi_at(k));
            double mean = stable_dot(s.weights(), zeta);
            (mean < 1.0 ? shift_lo : shift_hi) = shift;
        }
        return zeta;
    };

    switch (risk.kind()) {
        case RiskKind::Expectation:
            return RandomVariable(s.size(), 1.0);
        case RiskKind::CVaR: {
            double cap = 1.0 / risk.beta();
            RandomVariable draw(s.size());
            for (double& v : draw)
                v = rng.uniform(0.0, cap);
            return clamp_shift(std::move(draw), [](std::size_t) { return 0.0; },
                               [cap](std::size_t) { return cap; });
        }
        case RiskKind::MAD: {
            RandomVariable prime(s.size());
            for (double& v : prime)
                v = rng.uniform(-risk.lambda(), risk.lambda());
            double shift = expectation(s, prime);
            RandomVariable zeta(s.size());
            for (std::size_t k = 0; k < s.size(); ++k)
                zeta[k] = 1.0 + prime[k] - shift;
            return zeta;
        }
        case RiskKind::MeanCVaR: {
            RandomVariable core = random_envelope_density(RiskSpec::cvar(risk.beta()), s, rng);
            for (double& v : core)
                v = risk.theta() + (1.0 - risk.theta()) * v;
            return core;
        }
        case RiskKind::BoxMean: {
            if (risk.box_lo().size() != s.size())
                throw Misalignment("box_mean: bounds not aligned with scenario set");
            RandomVariable draw(s.size());
            for (std::size_t k = 0; k < s.size(); ++k)
                draw[k] = rng.uniform(risk.box_lo()[k], risk.box_hi()[k]);
            return clamp_shift(std::move(draw),
                               [&](std::size_t k) { return risk.box_lo()[k]; },
                               [&](std::size_t k) { return risk.box_hi()[k]; });
        }
    }
    throw DomainError("random_envelope_density: unknown risk kind");
}

}  // namespace riskalloc
