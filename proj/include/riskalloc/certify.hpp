#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <vector>

#include "riskalloc/dual.hpp"
#include "riskalloc/mixing.hpp"
#include "riskalloc/parallel.hpp"
#include "riskalloc/recovery.hpp"

namespace riskalloc {

struct GapRow {
    std::size_t level = 1;       // refinement factor m
    std::size_t atoms = 0;       // scenarios after refinement
    double primal = 0.0;         // best measured-feasible value found
    double dual = 0.0;           // best dual bound over the trace
    double gap_abs = 0.0;        // dual - primal
    double gap_rel = 0.0;        // gap_abs / max(|primal|, 1e-9)
    InnerMethod method = InnerMethod::Exhaustive;
    std::uint64_t seed = 0;
    long long runtime_ms = 0;    // measured wall time for the row
};

struct GapReport {
    std::vector<GapRow> rows;
};

struct GapStudyOptions {
    DualOptions dual;
    double feas_tol = 1e-6;  // slack tolerance when admitting primal points
    std::size_t threads = 1; // worker cap; the report content never depends on it
};

namespace detail {

inline double fmt_guard(double v) { return v == 0.0 ? 0.0 : v; }  // normalize -0

inline void append_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", fmt_guard(v));
    out += buf;
}

}  // namespace detail

/**
 * @brief One dual solve + primal recovery per refinement level.
 *
 * Every row is independent: its seed is derived from the base seed and its
 * level (not its position), its dual trace yields both the bound and the
 * recovered point, and the primal column is the best of the recovered
 * candidate, the measured-feasible trace iterates, and the strict-interior
 * witness. Rows are computed under a static index assignment so the report
 * is byte-identical for every thread count.
 */
inline GapReport gap_study(const RCPInstance& inst, std::span<const std::size_t> levels,
                           const GapStudyOptions& opts) {
    if (levels.empty())
        throw DomainError("gap_study: need at least one refinement level");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i] == 0)
            throw DomainError("gap_study: refinement levels must be positive");
        if (i > 0 && levels[i] <= levels[i - 1])
            throw DomainError("gap_study: refinement levels must be strictly ascending");
    }

    GapReport rep;
    rep.rows.resize(levels.size());
    std::uint64_t base_seed = opts.dual.seed.value_or(inst.seed());

    run_indexed(levels.size(), opts.threads, [&](std::size_t idx) {
        auto t0 = std::chrono::steady_clock::now();
        std::size_t m = levels[idx];
        RCPInstance fine = inst.with_refined_scenarios(m);

        DualOptions dopts = opts.dual;
        dopts.seed = derive_seed(base_seed, m);
        DualResult res = solve_dual(fine, dopts);

        double primal = -std::numeric_limits<double>::infinity();
        // recovery splices at least as finely as the row's own level, so the
        // mixture quality follows the refinement axis the study sweeps
        PrimalCandidate cand =
            recover_primal(fine, res, std::max(dopts.refine_factor, m));
        if (cand.min_slack >= -opts.feas_tol)
            primal = std::max(primal, cand.value);
        for (const TracePoint& tp : res.trace) {
            auto fv = feasible_value(fine, tp.x, res.policies[tp.policy_id], opts.feas_tol);
            if (fv)
                primal = std::max(primal, *fv);
        }
        if (auto fv = feasible_value(fine, fine.witness().x, fine.witness().policy,
                                     opts.feas_tol))
            primal = std::max(primal, *fv);

        GapRow row;
        row.level = m;
        row.atoms = fine.atoms();
        row.primal = primal;
        row.dual = res.best_dual;
        row.gap_abs = row.dual - row.primal;
        row.gap_rel = row.gap_abs / std::max(std::abs(row.primal), 1e-9);
        row.method = dopts.method;
        row.seed = *dopts.seed;
        auto t1 = std::chrono::steady_clock::now();
        row.runtime_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
        rep.rows[idx] = row;
    });
    return rep;
}

/// CSV serialization. runtime_ms is written as 0 unless include_runtime is
/// set, so default output is reproducible byte for byte across runs and
/// thread counts; opting in trades that for wall-clock visibility.
inline void write_gap_csv(std::ostream& os, const GapReport& rep, bool include_runtime = false) {
    os << "m,K,primal,dual,gap_abs,gap_rel,method,seed,runtime_ms\n";
    for (const GapRow& r : rep.rows) {
        std::string line;
        line += std::to_string(r.level);
        line += ',';
        line += std::to_string(r.atoms);
        line += ',';
        detail::append_double(line, r.primal);
        line += ',';
        detail::append_double(line, r.dual);
        line += ',';
        detail::append_double(line, r.gap_abs);
        line += ',';
        detail::append_double(line, r.gap_rel);
        line += ',';
        line += inner_method_name(r.method);
        line += ',';
        line += std::to_string(r.seed);
        line += ',';
        line += std::to_string(include_runtime ? r.runtime_ms : 0LL);
        line += '\n';
        os << line;
    }
}

/**
 * @brief Falsification probe for the dual bound: sample Lagrangian values at
 * the reported multipliers and report how far any exceeds the primal value.
 *
 * Weak duality says sup_L >= every sample, and the dual bound is sup_L, so a
 * positive excess over the dual bound would expose an implementation error;
 * the returned excess is over the primal estimate and quantifies (part of)
 * the duality gap from below.
 */
inline double hyperplane_check(const RCPInstance& inst, const Multipliers& mult,
                               double primal_hat, std::size_t n_samples, std::uint64_t seed) {
    require_multipliers(inst, mult);
    const Box& box = inst.x_box();
    std::size_t n = inst.n_services();
    double worst = 0.0;
    std::vector<double> x(n);
    Policy p;
    p.dim = inst.policy_class().dim();
    p.values.resize(inst.atoms() * p.dim);
    SplitMix64 rng(derive_seed(seed, 0x4A9fULL));
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (std::size_t i = 0; i < n; ++i)
            x[i] = rng.uniform(box.lo[i], box.hi[i]);
        for (std::size_t k = 0; k < inst.atoms(); ++k) {
            const auto& cands = inst.candidates(k);
            const auto& action = cands[rng.index(cands.size())];
            std::copy(action.begin(), action.end(), p.values.begin() + k * p.dim);
        }
        double L = lagrangian(inst, x, p, mult);
        worst = std::max(worst, L - primal_hat);
    }
    return std::max(0.0, worst);
}

/// Worst violation of the envelope form of the risk constraints at (x, p):
/// max over services and sampled admissible densities of x_i - E[zeta f_i].
/// The exact minimizing density is always included, so the result equals the
/// true violation up to roundoff; extra random densities cross-check the
/// envelope bookkeeping.
inline double semi_infinite_check(const RCPInstance& inst, std::span<const double> x,
                                  const Policy& p, std::size_t n_random, std::uint64_t seed) {
    check_point(inst, x, p);
    auto rows = service_table(inst, p);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < inst.n_services(); ++i) {
        const RiskSpec& risk = inst.risks()[i];
        std::vector<RandomVariable> densities;
        densities.push_back(
            worst_case_density(risk, inst.scenarios(), rows[i], Direction::Inf));
        for (std::size_t j = 0; j < n_random; ++j) {
            SplitMix64 rng(derive_seed(seed, 0x5EE0 + i * 131 + j));
            densities.push_back(random_envelope_density(risk, inst.scenarios(), rng));
        }
        for (const auto& zeta : densities) {
            double integral = stable_dot3(inst.scenarios().weights(), zeta, rows[i]);
            worst = std::max(worst, x[i] - integral);
        }
    }
    return std::max(0.0, worst);
}

struct ProbeRow {
    std::size_t pair = 0;
    double alpha = 0.0;
    std::size_t level = 1;
    double deficit = 0.0;
};

/// Measure how fast mixture risk deficits shrink under refinement: random
/// admissible endpoint pairs, a grid of mixing weights, and increasing
/// refinement factors. Deficits vanishing like 1/m is the closure evidence.
inline std::vector<ProbeRow> closure_convexity_probe(const RCPInstance& inst,
                                                     std::size_t n_pairs,
                                                     std::span<const double> alphas,
                                                     std::span<const std::size_t> levels,
                                                     std::uint64_t seed) {
    std::vector<ProbeRow> out;
    out.reserve(n_pairs * alphas.size() * levels.size());
    for (std::size_t pr = 0; pr < n_pairs; ++pr) {
        SplitMix64 rng_p(derive_seed(seed, 2 * pr));
        SplitMix64 rng_q(derive_seed(seed, 2 * pr + 1));
        Policy p = detail::random_admissible_policy(inst, rng_p);
        Policy q = detail::random_admissible_policy(inst, rng_q);
        for (double a : alphas) {
            for (std::size_t m : levels) {
                MixResult mr = mix_policies(inst, p, q, a, m);
                out.push_back(ProbeRow{pr, a, m, mr.epsilon});
            }
        }
    }
    return out;
}

inline void write_probe_csv(std::ostream& os, const std::vector<ProbeRow>& rows) {
    os << "pair,alpha,m,deficit\n";
    for (const ProbeRow& r : rows) {
        std::string line;
        line += std::to_string(r.pair);
        line += ',';
        detail::append_double(line, r.alpha);
        line += ',';
        line += std::to_string(r.level);
        line += ',';
        detail::append_double(line, r.deficit);
        line += '\n';
        os << line;
    }
}

}  // namespace riskalloc
