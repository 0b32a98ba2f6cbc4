#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "riskalloc/dual.hpp"
#include "riskalloc/mixing.hpp"

namespace riskalloc {

struct PrimalCandidate {
    std::vector<double> x;
    Policy policy;                   // rows on the refine_factor-fold refined set
    std::size_t refine_factor = 1;   // 1 when a single trace policy suffices
    double value = 0.0;              // g0(x)
    double min_slack = 0.0;          // worst constraint slack, measured
    std::vector<double> mix_weights; // alpha over the trace policy pool
};

namespace detail {

inline void project_simplex(std::vector<double>& v) {
    std::vector<double> u(v);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        cum += u[j];
        double t = (cum - 1.0) / static_cast<double>(j + 1);
        if (u[j] - t > 0.0)
            theta = t;
    }
    for (double& x : v)
        x = std::max(0.0, x - theta);
}

/// Convexified weight selection: maximize g0(x) over the box and the
/// simplex of trace policies, penalizing x_i above the alpha-averaged risk
/// row and any violated utility constraint. Only alpha is consumed by the
/// caller; x here is a proxy that steers it toward useful mixtures.
inline std::vector<double> optimize_mixture_weights(
    const RCPInstance& inst, const std::vector<std::vector<double>>& risk_rows) {
    std::size_t T = risk_rows.size();
    std::size_t n = inst.n_services();
    const Box& box = inst.x_box();
    const Utility& obj = inst.objective();

    double scale = 1.0 + std::abs(obj.scalar(box.lo)) + std::abs(obj.scalar(box.hi));
    double kappa = 1e3 * scale;
    double span = 1.0;
    for (std::size_t i = 0; i < n; ++i)
        span = std::max(span, box.hi[i] - box.lo[i]);

    std::vector<double> alpha(T, 0.0);
    std::vector<double> ravg(n), x(n), grad_x(n), grad_a(T), gobj(n), rows;
    auto averaged = [&]() {
        for (std::size_t i = 0; i < n; ++i) {
            StableSum acc;
            for (std::size_t t = 0; t < T; ++t)
                acc.add_product(alpha[t], risk_rows[t][i]);
            ravg[i] = acc.value();
        }
    };

    auto repaired_score = [&](std::vector<double>& xr) {
        for (std::size_t i = 0; i < n; ++i)
            xr[i] = std::clamp(std::min(x[i], ravg[i]), box.lo[i], box.hi[i]);
        double worst = 0.0;
        for (const auto& g : inst.constraints()) {
            rows.resize(g.rows());
            g.value(xr, rows);
            for (double r : rows)
                worst = std::min(worst, r);
        }
        return std::pair<double, double>(worst, obj.scalar(xr));
    };

    // initialization sweep: every corner and every pairwise blend of the
    // simplex, the latter by ternary search on the concave section, so the
    // gradient refinement below starts no worse than the best two-policy
    // mixture in the pool
    std::vector<double> xr(n);
    auto blend_score = [&](std::size_t a, std::size_t b, double w) {
        for (std::size_t i = 0; i < n; ++i) {
            ravg[i] = w * risk_rows[a][i] + (1.0 - w) * risk_rows[b][i];
            x[i] = std::clamp(ravg[i], box.lo[i], box.hi[i]);
        }
        auto [feas, val] = repaired_score(xr);
        return std::pair<double, double>(feas, val);
    };
    double init_feas = -std::numeric_limits<double>::infinity();
    double init_val = -std::numeric_limits<double>::infinity();
    std::size_t init_a = 0, init_b = 0;
    double init_w = 1.0;
    auto consider = [&](std::size_t a, std::size_t b, double w) {
        auto [feas, val] = blend_score(a, b, w);
        if (feas > init_feas || (feas == init_feas && val > init_val)) {
            init_feas = feas;
            init_val = val;
            init_a = a;
            init_b = b;
            init_w = w;
        }
    };
    for (std::size_t a = 0; a < T; ++a) {
        consider(a, a, 1.0);
        for (std::size_t b = a + 1; b < T; ++b) {
            double lo = 0.0, hi = 1.0;
            for (int it = 0; it < 40; ++it) {
                double w1 = lo + (hi - lo) / 3.0, w2 = hi - (hi - lo) / 3.0;
                if (blend_score(a, b, w1) < blend_score(a, b, w2))
                    lo = w1;
                else
                    hi = w2;
            }
            consider(a, b, 0.5 * (lo + hi));
        }
    }
    alpha[init_a] += init_w;
    alpha[init_b] += 1.0 - init_w;
    averaged();
    for (std::size_t i = 0; i < n; ++i)
        x[i] = std::clamp(ravg[i], box.lo[i], box.hi[i]);

    std::vector<double> best_alpha = alpha;
    auto [best_feas, best_val] = repaired_score(xr);

    for (std::size_t it = 0; it < 500; ++it) {
        obj.supergradient(x, 0, gobj);
        std::fill(grad_a.begin(), grad_a.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            grad_x[i] = gobj[i];
            if (x[i] > ravg[i]) {
                grad_x[i] -= kappa;
                for (std::size_t t = 0; t < T; ++t)
                    grad_a[t] += kappa * risk_rows[t][i];
            }
        }
        std::vector<double> grow(n);
        for (const auto& g : inst.constraints()) {
            rows.resize(g.rows());
            g.value(x, rows);
            for (std::size_t r = 0; r < g.rows(); ++r) {
                if (rows[r] < 0.0) {
                    g.supergradient(x, r, grow);
                    for (std::size_t i = 0; i < n; ++i)
                        grad_x[i] += kappa * grow[i];
                }
            }
        }

        // the two blocks live on different scales (box vs simplex) and the
        // penalty gradients are huge, so each block normalizes on its own
        double gx = 0.0, ga = 0.0;
        for (double v : grad_x)
            gx = std::max(gx, std::abs(v));
        for (double v : grad_a)
            ga = std::max(ga, std::abs(v));
        if (gx == 0.0 && ga == 0.0)
            break;
        double root = std::sqrt(static_cast<double>(it + 1));
        if (gx > 0.0) {
            double eta = 0.25 * span / (gx * root);
            for (std::size_t i = 0; i < n; ++i)
                x[i] = std::clamp(x[i] + eta * grad_x[i], box.lo[i], box.hi[i]);
        }
        if (ga > 0.0) {
            double eta = 0.5 / (ga * root);
            for (std::size_t t = 0; t < T; ++t)
                alpha[t] += eta * grad_a[t];
        }
        project_simplex(alpha);
        averaged();

        auto [feas, val] = repaired_score(xr);
        if (feas > best_feas || (feas == best_feas && val > best_val)) {
            best_feas = feas;
            best_val = val;
            best_alpha = alpha;
        }
    }
    return best_alpha;
}

/// Maximize g0 over a shrunk box with violated constraints penalized.
/// Exact per-coordinate sweeps when nothing couples the coordinates.
inline std::vector<double> best_x_in_box(const RCPInstance& inst, const Box& b) {
    const Utility& obj = inst.objective();
    std::size_t n = inst.n_services();
    double scale = 1.0 + std::abs(obj.scalar(b.lo)) + std::abs(obj.scalar(b.hi));
    double kappa = 1e3 * scale;
    auto score = [&](std::span<const double> x) {
        double v = obj.scalar(x);
        std::vector<double> rows;
        for (const auto& g : inst.constraints()) {
            rows.resize(g.rows());
            g.value(x, rows);
            for (double r : rows)
                v -= kappa * std::max(0.0, -r);
        }
        return v;
    };

    if (inst.constraints().empty() && inst.x_separable()) {
        std::vector<double> x(b.lo);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t i = 0; i < n; ++i) {
                auto slice = [&](double t) {
                    x[i] = t;
                    return score(x);
                };
                x[i] = detail::golden_max(slice, b.lo[i], b.hi[i]).first;
            }
        }
        return x;
    }

    std::vector<double> x(b.hi), best_x(b.hi), trial(n), grad(n);
    double fx = score(x), best = fx;
    double span = 1.0;
    for (std::size_t i = 0; i < n; ++i)
        span = std::max(span, b.hi[i] - b.lo[i]);
    for (int it = 0; it < 300; ++it) {
        double h = 1e-6 * span;
        for (std::size_t i = 0; i < n; ++i) {
            double up = std::min(x[i] + h, b.hi[i]);
            double dn = std::max(x[i] - h, b.lo[i]);
            double save = x[i];
            x[i] = up;
            double fu = score(x);
            x[i] = dn;
            double fd = score(x);
            x[i] = save;
            grad[i] = up > dn ? (fu - fd) / (up - dn) : 0.0;
        }
        double gnorm = 0.0;
        for (double g : grad)
            gnorm = std::max(gnorm, std::abs(g));
        if (gnorm == 0.0)
            break;
        double step = span / gnorm;
        bool moved = false;
        for (int bt = 0; bt < 40; ++bt) {
            for (std::size_t i = 0; i < n; ++i)
                trial[i] = std::clamp(x[i] + step * grad[i], b.lo[i], b.hi[i]);
            double ft = score(trial);
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
        if (fx > best) {
            best = fx;
            best_x = x;
        }
    }
    double flo = score(b.lo);
    if (flo > best) {
        best = flo;
        best_x = b.lo;
    }
    return best_x;
}

}  // namespace detail

namespace detail {

/// x capped at the measured risk vector, objective and slack measured on the
/// set the policy lives on.
inline void finish_candidate(const RCPInstance& inst, const RCPInstance& working,
                             PrimalCandidate& cand) {
    std::vector<double> r = risk_values(working, cand.policy);
    Box capped = inst.x_box();
    for (std::size_t i = 0; i < capped.hi.size(); ++i)
        capped.hi[i] = std::max(capped.lo[i], std::min(capped.hi[i], r[i]));
    cand.x = detail::best_x_in_box(inst, capped);
    cand.value = inst.objective().scalar(cand.x);
    cand.min_slack = constraint_slack(working, cand.x, cand.policy).min();
}

/// Feasible-first ordering: a candidate with nonnegative measured slack beats
/// any infeasible one; within a class, higher value wins, then higher slack.
inline bool candidate_improves(const PrimalCandidate& challenger,
                               const PrimalCandidate& incumbent) {
    bool cf = challenger.min_slack >= 0.0, xf = incumbent.min_slack >= 0.0;
    if (cf != xf)
        return cf;
    if (challenger.value != incumbent.value)
        return cf ? challenger.value > incumbent.value
                  : challenger.min_slack > incumbent.min_slack;
    return challenger.min_slack > incumbent.min_slack;
}

}  // namespace detail

/**
 * @brief Build a deterministic primal point from a dual trace.
 *
 * Chooses mixture weights over the deduplicated trace policies by a
 * penalized concave program, folds the active policies pairwise on the
 * refine_factor-fold refined set, measures the mixed policy's risks, and
 * reassigns x as the best objective point under those measured risks. The
 * realized mixture is then compared against a stratified apportionment of
 * the copy blocks and against the strongest single pooled policy, all on
 * measured value and slack, and the best candidate is returned: the weight
 * program scores an idealized average, so any one realization can lose once
 * its deficit is charged. The reported min_slack is measured on the set the
 * returned policy lives on; callers decide feasibility against their own
 * tolerance.
 */
inline PrimalCandidate recover_primal(const RCPInstance& inst, const DualResult& res,
                                      std::size_t refine_factor) {
    if (res.policies.empty())
        throw EmptyTrace("recover_primal: dual trace has no policies");
    if (refine_factor == 0)
        throw DomainError("recover_primal: refinement factor must be positive");
    std::size_t T = res.policies.size();

    std::vector<std::vector<double>> risk_rows(T);
    for (std::size_t t = 0; t < T; ++t)
        risk_rows[t] = risk_values(inst, res.policies[t]);

    std::vector<double> alpha =
        T == 1 ? std::vector<double>{1.0} : detail::optimize_mixture_weights(inst, risk_rows);

    std::vector<std::size_t> active;
    for (std::size_t t = 0; t < T; ++t)
        if (alpha[t] > 1e-9)
            active.push_back(t);
    if (active.empty()) {
        // numerically all-zero weights: fall back to the best dual iterate
        active.push_back(res.best_iter < res.trace.size()
                             ? res.trace[res.best_iter].policy_id
                             : 0);
        alpha.assign(T, 0.0);
        alpha[active[0]] = 1.0;
    }
    std::stable_sort(active.begin(), active.end(),
                     [&](std::size_t a, std::size_t b) { return alpha[a] > alpha[b]; });

    PrimalCandidate cand;
    cand.mix_weights = alpha;

    const RCPInstance* working = &inst;
    RCPInstance fine = inst;
    if (active.size() == 1) {
        cand.policy = res.policies[active[0]];
        cand.refine_factor = 1;
    } else {
        fine = inst.with_refined_scenarios(refine_factor);
        working = &fine;
        // the first pair is spliced on the base set at the full split factor,
        // so the subset search sees the copy blocks; later pairs carry ever
        // smaller weight and fold on the refined set directly
        double cum = alpha[active[0]] + alpha[active[1]];
        Policy current =
            mix_policies(inst, res.policies[active[0]], res.policies[active[1]],
                         alpha[active[0]] / cum, refine_factor)
                .policy;
        for (std::size_t j = 2; j < active.size(); ++j) {
            Policy next = duplicate_rows(res.policies[active[j]], refine_factor);
            double beta = cum / (cum + alpha[active[j]]);
            MixResult mr = mix_policies(fine, current, next, beta, 1);
            current = std::move(mr.policy);
            cum += alpha[active[j]];
        }
        cand.policy = std::move(current);
        cand.refine_factor = refine_factor;
    }
    detail::finish_candidate(inst, *working, cand);

    // stratified apportionment challenger: deal each base atom's copies to
    // the active policies by largest remaining share of the block mass, so
    // every per-policy mass error is at most one copy weight no matter how
    // many policies the mixture spans
    if (active.size() > 1) {
        double active_mass = 0.0;
        for (std::size_t t : active)
            active_mass += alpha[t];
        std::size_t dim = res.policies[active[0]].dim;
        PrimalCandidate deal;
        deal.mix_weights = alpha;
        deal.refine_factor = refine_factor;
        deal.policy.dim = dim;
        deal.policy.values.resize(fine.atoms() * dim);
        std::vector<double> want(active.size()), got(active.size());
        for (std::size_t k = 0; k < inst.atoms(); ++k) {
            double group = 0.0;
            for (std::size_t j = 0; j < refine_factor; ++j)
                group += fine.scenarios().weight(k * refine_factor + j);
            for (std::size_t t = 0; t < active.size(); ++t) {
                want[t] = alpha[active[t]] / active_mass * group;
                got[t] = 0.0;
            }
            for (std::size_t j = 0; j < refine_factor; ++j) {
                std::size_t pick = 0;
                for (std::size_t t = 1; t < active.size(); ++t)
                    if (want[t] - got[t] > want[pick] - got[pick])
                        pick = t;
                auto src = res.policies[active[pick]].row(k);
                std::copy(src.begin(), src.end(),
                          deal.policy.values.begin() +
                              (k * refine_factor + j) * dim);
                got[pick] += fine.scenarios().weight(k * refine_factor + j);
            }
        }
        detail::finish_candidate(inst, fine, deal);
        if (detail::candidate_improves(deal, cand))
            cand = std::move(deal);
    }

    // measured single-policy challengers; their values do not depend on the
    // refinement, which also anchors gap studies across levels
    for (std::size_t t = 0; t < T; ++t) {
        PrimalCandidate single;
        single.policy = res.policies[t];
        single.refine_factor = 1;
        single.mix_weights.assign(T, 0.0);
        single.mix_weights[t] = 1.0;
        detail::finish_candidate(inst, inst, single);
        if (detail::candidate_improves(single, cand))
            cand = std::move(single);
    }
    return cand;
}

}  // namespace riskalloc
