#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "riskalloc/instance.hpp"

namespace riskalloc {

struct Multipliers {
    std::vector<double> util;  // one entry per constraint row
    std::vector<double> risk;  // one entry per service component

    static Multipliers zeros(const RCPInstance& inst) {
        return {std::vector<double>(inst.n_constraint_rows(), 0.0),
                std::vector<double>(inst.n_services(), 0.0)};
    }
};

inline void require_multipliers(const RCPInstance& inst, const Multipliers& mult) {
    if (mult.util.size() != inst.n_constraint_rows() || mult.risk.size() != inst.n_services())
        throw Misalignment("multipliers: dimension mismatch");
    for (double v : mult.util)
        if (v < 0.0 || !std::isfinite(v))
            throw NegativeMultiplier("multipliers must be nonnegative and finite");
    for (double v : mult.risk)
        if (v < 0.0 || !std::isfinite(v))
            throw NegativeMultiplier("multipliers must be nonnegative and finite");
}

/// L(x, p, lambda) = g0(x) + <lambda_g, g(x)> + <lambda_rho, lower(f(p)) - x>.
/// At feasible points with zero slack this is exactly g0(x).
inline double lagrangian(const RCPInstance& inst, std::span<const double> x, const Policy& p,
                         const Multipliers& mult) {
    require_multipliers(inst, mult);
    Slack s = constraint_slack(inst, x, p);
    StableSum acc;
    acc.add(inst.objective().scalar(x));
    for (std::size_t c = 0; c < s.util.size(); ++c)
        acc.add_product(mult.util[c], s.util[c]);
    for (std::size_t i = 0; i < s.risk.size(); ++i)
        acc.add_product(mult.risk[i], s.risk[i]);
    return acc.value();
}

struct InnerXResult {
    std::vector<double> x;
    double value = 0.0;
};

struct InnerPolicyResult {
    Policy policy;
    double value = 0.0;
};

namespace detail {

/// phi(x) = g0(x) + <lambda_g, g(x)> - <lambda_rho, x>, the x-part of the
/// Lagrangian. Concave on X by construction of the utility family.
class XObjective {
public:
    XObjective(const RCPInstance& inst, const Multipliers& mult) : inst_(inst), mult_(mult) {}

    double operator()(std::span<const double> x) const {
        StableSum acc;
        acc.add(inst_.objective().scalar(x));
        std::size_t at = 0;
        std::vector<double> rows;
        for (const auto& g : inst_.constraints()) {
            rows.resize(g.rows());
            g.value(x, rows);
            for (std::size_t r = 0; r < rows.size(); ++r)
                acc.add_product(mult_.util[at + r], rows[r]);
            at += g.rows();
        }
        for (std::size_t i = 0; i < x.size(); ++i)
            acc.add_product(-mult_.risk[i], x[i]);
        return acc.value();
    }

    void supergradient(std::span<const double> x, std::span<double> out) const {
        std::vector<double> grad(x.size());
        inst_.objective().supergradient(x, 0, out);
        std::size_t at = 0;
        for (const auto& g : inst_.constraints()) {
            for (std::size_t r = 0; r < g.rows(); ++r) {
                if (mult_.util[at + r] != 0.0) {
                    g.supergradient(x, r, grad);
                    for (std::size_t i = 0; i < x.size(); ++i)
                        out[i] += mult_.util[at + r] * grad[i];
                }
            }
            at += g.rows();
        }
        for (std::size_t i = 0; i < x.size(); ++i)
            out[i] -= mult_.risk[i];
    }

private:
    const RCPInstance& inst_;
    const Multipliers& mult_;
};

/// Golden-section maximization of a concave slice. Endpoints are compared
/// explicitly and ties resolve to the smaller abscissa, so flat objectives
/// report the lowest corner.
template <class F>
std::pair<double, double> golden_max(F&& f, double lo, double hi) {
    if (hi <= lo)
        return {lo, f(lo)};
    constexpr double invphi = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 80 && (b - a) > 1e-12 * (hi - lo); ++it) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    double mid = 0.5 * (a + b);
    double best_t = lo, best_v = f(lo);
    double fm = f(mid);
    if (fm > best_v) {
        best_t = mid;
        best_v = fm;
    }
    double fhi = f(hi);
    if (fhi > best_v) {
        best_t = hi;
        best_v = fhi;
    }
    return {best_t, best_v};
}

}  // namespace detail

/**
 * @brief Maximize the x-part of the Lagrangian over the box X.
 *
 * Separable instances (no Min utility anywhere) use exact per-coordinate
 * golden-section sweeps; otherwise projected supergradient ascent with
 * backtracking runs for 200 iterations from the lowest corner. Ties report
 * the lowest corner in either path.
 */
inline InnerXResult maximize_over_x(const RCPInstance& inst, const Multipliers& mult) {
    require_multipliers(inst, mult);
    detail::XObjective phi(inst, mult);
    const Box& box = inst.x_box();
    std::size_t n = inst.n_services();

    std::vector<double> x(box.lo);
    if (inst.x_separable()) {
        // one sweep settles each independent coordinate; the second is a
        // no-op guard against accidental coupling
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t i = 0; i < n; ++i) {
                auto slice = [&](double t) {
                    x[i] = t;
                    return phi(x);
                };
                x[i] = detail::golden_max(slice, box.lo[i], box.hi[i]).first;
            }
        }
        return {x, phi(x)};
    }

    double span = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        span = std::max(span, box.hi[i] - box.lo[i]);
    double fx = phi(x);
    std::vector<double> best_x = x;
    double best_v = fx;
    std::vector<double> grad(n), trial(n);
    for (int it = 0; it < 200; ++it) {
        phi.supergradient(x, grad);
        double gnorm = 0.0;
        for (double g : grad)
            gnorm = std::max(gnorm, std::abs(g));
        if (gnorm == 0.0)
            break;
        double step = std::max(span, 1.0) / gnorm;
        bool moved = false;
        for (int bt = 0; bt < 40; ++bt) {
            for (std::size_t i = 0; i < n; ++i)
                trial[i] = std::clamp(x[i] + step * grad[i], box.lo[i], box.hi[i]);
            double ft = phi(trial);
            if (ft > fx) {
                x = trial;
                fx = ft;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if (!moved)
            break;
        if (fx > best_v) {
            best_v = fx;
            best_x = x;
        }
    }
    return {best_x, best_v};
}

namespace detail {

/// Contiguous runs of bitwise-identical atoms. refine() produces its copies
/// contiguously, so on refined sets the groups are the original atoms; on
/// generic sets every group is a singleton and enumeration degenerates to
/// the plain product grid.
inline std::vector<std::pair<std::size_t, std::size_t>> scenario_groups(const RCPInstance& inst) {
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    const ScenarioSet& s = inst.scenarios();
    std::size_t start = 0;
    for (std::size_t k = 1; k <= s.size(); ++k) {
        bool same = k < s.size() && std::equal(s.point(k).begin(), s.point(k).end(),
                                               s.point(start).begin());
        if (!same) {
            groups.emplace_back(start, k - start);
            start = k;
        }
    }
    return groups;
}

inline double multichoose(std::size_t mu, std::size_t g) {
    // C(mu + g - 1, g - 1) in floating point; callers only compare to 1e7
    double v = 1.0;
    for (std::size_t j = 1; j < g; ++j) {
        v *= static_cast<double>(mu + j) / static_cast<double>(j);
        if (v > 1e16)
            return v;
    }
    return v;
}

class PolicyAssembler {
public:
    explicit PolicyAssembler(const RCPInstance& inst)
        : inst_(inst), n_(inst.n_services()),
          rows_(n_, RandomVariable(inst.atoms())), assign_(inst.atoms(), 0) {
        refresh_all();
    }

    void set(std::size_t k, std::size_t cand) {
        assign_[k] = cand;
        auto vals = inst_.candidate_values(k, cand);
        for (std::size_t i = 0; i < n_; ++i)
            rows_[i][k] = vals[i];
    }

    void refresh_all() {
        for (std::size_t k = 0; k < assign_.size(); ++k)
            set(k, assign_[k]);
    }

    double objective(std::span<const double> lambda_risk) const {
        StableSum acc;
        for (std::size_t i = 0; i < n_; ++i) {
            if (lambda_risk[i] == 0.0)
                continue;
            acc.add_product(lambda_risk[i],
                            lower_evaluate(inst_.risks()[i], inst_.scenarios(), rows_[i]));
        }
        return acc.value();
    }

    const std::vector<std::size_t>& assignment() const { return assign_; }
    const std::vector<RandomVariable>& rows() const { return rows_; }

    Policy to_policy() const {
        Policy p;
        p.dim = inst_.policy_class().dim();
        p.values.reserve(assign_.size() * p.dim);
        for (std::size_t k = 0; k < assign_.size(); ++k) {
            const auto& action = inst_.candidates(k)[assign_[k]];
            p.values.insert(p.values.end(), action.begin(), action.end());
        }
        return p;
    }

private:
    const RCPInstance& inst_;
    std::size_t n_;
    std::vector<RandomVariable> rows_;
    std::vector<std::size_t> assign_;
};

/**
 * @brief Exact grid maximization of psi(p) = <lambda, lower(f(p))>.
 *
 * Enumerates candidate assignments group by group; within a group of
 * identical atoms only nondecreasing candidate tuples are visited (the value
 * depends on the assignment only through its multiset, up to the ulp-level
 * weight telescoping of refine), which keeps refined sets tractable. The
 * enumeration order is lexicographic on the flattened assignment and the
 * first strict maximum wins, so ties return the lexicographically smallest
 * grid index. Errors with GridTooLarge above 1e7 combinations.
 */
inline InnerPolicyResult maximize_policy_exhaustive(const RCPInstance& inst,
                                                    std::span<const double> lambda_risk) {
    auto groups = scenario_groups(inst);
    double combos = 1.0;
    for (auto [start, count] : groups) {
        combos *= multichoose(count, inst.candidates(start).size());
        if (combos > 1e7)
            throw GridTooLarge("exhaustive policy search: grouped grid exceeds 1e7 combinations");
    }

    PolicyAssembler asm_(inst);
    // tuples[g][j]: candidate of the j-th copy in group g, kept nondecreasing
    std::vector<std::vector<std::size_t>> tuples;
    tuples.reserve(groups.size());
    for (auto [start, count] : groups)
        tuples.emplace_back(count, 0);

    double best = asm_.objective(lambda_risk);
    std::vector<std::size_t> best_assign = asm_.assignment();

    auto advance = [&]() -> bool {
        // odometer over groups, last group fastest; within a group the next
        // nondecreasing tuple in lexicographic order
        for (std::size_t gi = groups.size(); gi-- > 0;) {
            auto& tup = tuples[gi];
            std::size_t cands = inst.candidates(groups[gi].first).size();
            std::size_t j = tup.size();
            while (j-- > 0) {
                if (tup[j] + 1 < cands) {
                    std::size_t v = tup[j] + 1;
                    for (std::size_t r = j; r < tup.size(); ++r)
                        tup[r] = v;
                    for (std::size_t r = j; r < tup.size(); ++r)
                        asm_.set(groups[gi].first + r, v);
                    return true;
                }
            }
            std::fill(tup.begin(), tup.end(), 0);
            for (std::size_t r = 0; r < tup.size(); ++r)
                asm_.set(groups[gi].first + r, 0);
        }
        return false;
    };

    while (advance()) {
        double v = asm_.objective(lambda_risk);
        if (v > best) {
            best = v;
            best_assign = asm_.assignment();
        }
    }

    PolicyAssembler out(inst);
    for (std::size_t k = 0; k < best_assign.size(); ++k)
        out.set(k, best_assign[k]);
    return {out.to_policy(), best};
}

/// Cyclic per-atom improvement from 8 seeded random starts; strict
/// improvements only, so every restart terminates at a local optimum.
inline InnerPolicyResult maximize_policy_coordinate(const RCPInstance& inst,
                                                    std::span<const double> lambda_risk,
                                                    std::uint64_t seed) {
    constexpr int kRestarts = 8;
    PolicyAssembler asm_(inst);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> best_assign;
    for (int r = 0; r < kRestarts; ++r) {
        SplitMix64 rng(derive_seed(seed, 0xC0 + static_cast<std::uint64_t>(r)));
        for (std::size_t k = 0; k < inst.atoms(); ++k)
            asm_.set(k, rng.index(inst.candidates(k).size()));
        double cur = asm_.objective(lambda_risk);
        for (int pass = 0; pass < 200; ++pass) {
            bool improved = false;
            for (std::size_t k = 0; k < inst.atoms(); ++k) {
                std::size_t keep = asm_.assignment()[k];
                std::size_t arg = keep;
                for (std::size_t c = 0; c < inst.candidates(k).size(); ++c) {
                    if (c == keep)
                        continue;
                    asm_.set(k, c);
                    double v = asm_.objective(lambda_risk);
                    if (v > cur) {
                        cur = v;
                        arg = c;
                        improved = true;
                    }
                }
                asm_.set(k, arg);
            }
            if (!improved)
                break;
        }
        if (cur > best) {
            best = cur;
            best_assign = asm_.assignment();
        }
    }
    PolicyAssembler out(inst);
    for (std::size_t k = 0; k < best_assign.size(); ++k)
        out.set(k, best_assign[k]);
    return {out.to_policy(), best};
}

/// Alternates a per-atom argmax against fixed densities with the worst-case
/// densities at the current policy; the best true objective value over 50
/// rounds is returned. A heuristic: the saddle point need not exist.
inline InnerPolicyResult maximize_policy_minimax(const RCPInstance& inst,
                                                 std::span<const double> lambda_risk) {
    std::size_t n = inst.n_services();
    PolicyAssembler asm_(inst);
    std::vector<RandomVariable> zeta(n, RandomVariable(inst.atoms(), 1.0));
    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> best_assign;
    for (int round = 0; round < 50; ++round) {
        for (std::size_t k = 0; k < inst.atoms(); ++k) {
            std::size_t arg = 0;
            double arg_v = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < inst.candidates(k).size(); ++c) {
                auto vals = inst.candidate_values(k, c);
                double v = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    v += lambda_risk[i] * zeta[i][k] * vals[i];
                if (v > arg_v) {
                    arg_v = v;
                    arg = c;
                }
            }
            asm_.set(k, arg);
        }
        double v = asm_.objective(lambda_risk);
        if (v > best) {
            best = v;
            best_assign = asm_.assignment();
        }
        for (std::size_t i = 0; i < n; ++i)
            zeta[i] = worst_case_density(inst.risks()[i], inst.scenarios(), asm_.rows()[i],
                                         Direction::Inf);
    }
    PolicyAssembler out(inst);
    for (std::size_t k = 0; k < best_assign.size(); ++k)
        out.set(k, best_assign[k]);
    return {out.to_policy(), best};
}

}  // namespace detail

/// Maximize <lambda_rho, lower(f(p))> over grid policies. The risk envelopes
/// couple atoms, so this does not decompose per scenario; exhaustive search
/// is the exact reference, the other two are seeded local methods.
inline InnerPolicyResult maximize_over_policy(const RCPInstance& inst,
                                              std::span<const double> lambda_risk,
                                              InnerMethod method, std::uint64_t seed) {
    if (lambda_risk.size() != inst.n_services())
        throw Misalignment("maximize_over_policy: multiplier dimension mismatch");
    for (double v : lambda_risk)
        if (v < 0.0 || !std::isfinite(v))
            throw NegativeMultiplier("maximize_over_policy: multipliers must be nonnegative");
    switch (method) {
        case InnerMethod::Exhaustive:
            return detail::maximize_policy_exhaustive(inst, lambda_risk);
        case InnerMethod::Coordinate:
            return detail::maximize_policy_coordinate(inst, lambda_risk, seed);
        case InnerMethod::Minimax:
            return detail::maximize_policy_minimax(inst, lambda_risk);
    }
    throw DomainError("maximize_over_policy: unknown method");
}

struct DualEval {
    double value = 0.0;
    std::vector<double> x;
    Policy policy;
    Slack slack;  // subgradient of D at lambda: (g(x_hat), lower(f(p_hat)) - x_hat)
    bool exact = false;
};

/// D(lambda) = sup_x [the x-part] + sup_p <lambda_rho, lower(f(p))>. The two
/// suprema separate because the coupling is additive. `exact` certifies that
/// both parts were solved exactly (exhaustive grid + separable x-sweep).
inline DualEval dual_value(const RCPInstance& inst, const Multipliers& mult, InnerMethod method,
                           std::uint64_t seed) {
    require_multipliers(inst, mult);
    InnerXResult xr = maximize_over_x(inst, mult);
    InnerPolicyResult pr = maximize_over_policy(inst, mult.risk, method, seed);
    DualEval ev;
    ev.value = xr.value + pr.value;
    ev.x = std::move(xr.x);
    ev.policy = std::move(pr.policy);
    ev.slack = constraint_slack(inst, ev.x, ev.policy);
    ev.exact = method == InnerMethod::Exhaustive && inst.x_separable();
    return ev;
}

struct TracePoint {
    std::size_t iter = 0;
    Multipliers lambda;
    double dual = 0.0;
    std::vector<double> x;
    std::size_t policy_id = 0;  // index into DualResult::policies
    Slack slack;
};

struct DualResult {
    double best_dual = 0.0;
    Multipliers best_multipliers;
    std::size_t best_iter = 0;
    std::vector<TracePoint> trace;
    std::vector<Policy> policies;  // deduplicated maximizer pool
    bool exact_inner = false;
    InnerMethod method = InnerMethod::Exhaustive;
};

/**
 * @brief Projected subgradient descent on the dual.
 *
 * lambda^0 = 0, lambda^{t+1} = max(0, lambda^t - eta_t s^t) with
 * eta_t = eta0 / sqrt(t + 1) and s^t the constraint slacks at the inner
 * maximizers. Reports the best (smallest) dual value over the trace; the
 * trace keeps every iterate with a reference into the deduplicated policy
 * pool for primal recovery.
 */
inline DualResult solve_dual(const RCPInstance& inst, const DualOptions& opts) {
    if (opts.max_iters == 0)
        throw EmptyTrace("solve_dual: max_iters must be positive");
    std::uint64_t seed = opts.seed.value_or(inst.seed());

    DualResult res;
    res.method = opts.method;
    res.exact_inner = true;
    res.best_dual = std::numeric_limits<double>::infinity();
    std::map<std::vector<double>, std::size_t> pool;

    Multipliers lambda = Multipliers::zeros(inst);
    for (std::size_t t = 0; t < opts.max_iters; ++t) {
        DualEval ev = dual_value(inst, lambda, opts.method, derive_seed(seed, t));
        res.exact_inner = res.exact_inner && ev.exact;

        auto [it, inserted] = pool.try_emplace(ev.policy.values, res.policies.size());
        if (inserted)
            res.policies.push_back(ev.policy);
        std::size_t policy_id = it->second;

        if (ev.value < res.best_dual) {
            res.best_dual = ev.value;
            res.best_multipliers = lambda;
            res.best_iter = t;
        }
        res.trace.push_back(TracePoint{t, lambda, ev.value, ev.x, policy_id, ev.slack});

        double eta = opts.eta0 / std::sqrt(static_cast<double>(t + 1));
        for (std::size_t c = 0; c < lambda.util.size(); ++c)
            lambda.util[c] = std::max(0.0, lambda.util[c] - eta * ev.slack.util[c]);
        for (std::size_t i = 0; i < lambda.risk.size(); ++i)
            lambda.risk[i] = std::max(0.0, lambda.risk[i] - eta * ev.slack.risk[i]);
    }
    return res;
}

}  // namespace riskalloc
