#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "riskalloc/instance.hpp"

namespace riskalloc {

struct HalveResult {
    std::vector<std::size_t> subset;  // indices into the refined set, ascending
    double error = 0.0;               // |sum over subset - half of total|
    double target = 0.0;              // half of the total mass of w .* v
};

/**
 * @brief Pick a subset of the m-fold refined atoms carrying half the mass of
 * w .* v, up to one refined term.
 *
 * Greedy signed rounding over terms in decreasing magnitude, then toggle
 * passes to local optimality. At a toggle-local optimum the residual cannot
 * exceed the largest single term max_k w_k |v_k|, which shrinks like 1/m
 * under refinement; that is the whole point of splitting atoms.
 */
inline HalveResult blackwell_halve(const ScenarioSet& base, const RandomVariable& v,
                                   std::size_t m) {
    require_aligned(base, v, "blackwell_halve");
    if (m == 0)
        throw DomainError("blackwell_halve: refinement factor must be positive");
    ScenarioSet fine = refine(base, m);
    RandomVariable vals = duplicate(v, m);
    std::size_t n = fine.size();

    std::vector<double> term(n);
    for (std::size_t k = 0; k < n; ++k)
        term[k] = fine.weight(k) * vals[k];
    double target = 0.5 * stable_total(term);

    std::vector<char> in(n, 0);
    auto residual = [&]() {
        StableSum acc;
        for (std::size_t k = 0; k < n; ++k)
            if (in[k])
                acc.add(term[k]);
        acc.add(-target);
        return acc.value();
    };

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(term[a]) > std::abs(term[b]);
    });

    double e = -target;
    for (std::size_t k : order) {
        if (std::abs(e + term[k]) < std::abs(e)) {
            in[k] = 1;
            e += term[k];
        }
    }

    // toggle to local optimality; acceptance recomputes the residual exactly,
    // so |e| strictly decreases over distinct subsets and the loop terminates
    e = residual();
    bool improved = true;
    while (improved) {
        improved = false;
        for (std::size_t k = 0; k < n; ++k) {
            double trial = in[k] ? e - term[k] : e + term[k];
            if (std::abs(trial) < std::abs(e)) {
                in[k] ^= 1;
                double exact = residual();
                if (std::abs(exact) < std::abs(e)) {
                    e = exact;
                    improved = true;
                } else {
                    in[k] ^= 1;
                }
            }
        }
    }

    HalveResult out;
    out.target = target;
    out.error = std::abs(e);
    for (std::size_t k = 0; k < n; ++k)
        if (in[k])
            out.subset.push_back(k);
    return out;
}

/// Test densities used to steer the mixing subset search: the worst-case
/// envelope densities of every risk at both endpoint policies, the constant
/// density, and a handful of seeded admissible draws.
struct TestDensityFamily {
    std::vector<RandomVariable> densities;
};

inline TestDensityFamily default_test_densities(const RCPInstance& inst, const Policy& p,
                                                const Policy& q, std::uint64_t seed) {
    TestDensityFamily fam;
    auto rows_p = service_table(inst, p);
    auto rows_q = service_table(inst, q);
    for (std::size_t i = 0; i < inst.n_services(); ++i) {
        fam.densities.push_back(
            worst_case_density(inst.risks()[i], inst.scenarios(), rows_p[i], Direction::Inf));
        fam.densities.push_back(
            worst_case_density(inst.risks()[i], inst.scenarios(), rows_q[i], Direction::Inf));
    }
    fam.densities.emplace_back(inst.atoms(), 1.0);
    for (std::uint64_t j = 0; j < 8; ++j) {
        const RiskSpec& risk = inst.risks()[j % inst.n_services()];
        SplitMix64 rng(derive_seed(seed, j));
        fam.densities.push_back(random_envelope_density(risk, inst.scenarios(), rng));
    }
    return fam;
}

struct MixResult {
    Policy policy;                    // rows on the refine_factor-fold refined set
    double epsilon = 0.0;             // worst risk deficit against the alpha-average
    std::vector<std::size_t> subset;  // refined atoms taking rows from the first policy
    std::size_t refine_factor = 1;
};

namespace detail {

struct MixWorkspace {
    std::vector<std::vector<double>> rows_p, rows_q;  // service rows on the refined set
    std::vector<double> lower_p, lower_q;             // lower risk evaluations per service
};

inline double subset_epsilon(const RCPInstance& inst, const MixWorkspace& ws, double alpha,
                             const std::vector<char>& in) {
    std::size_t n = inst.n_services();
    std::size_t atoms = inst.atoms();
    RandomVariable row(atoms);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < atoms; ++k)
            row[k] = in[k] ? ws.rows_p[i][k] : ws.rows_q[i][k];
        double need = alpha * ws.lower_p[i] + (1.0 - alpha) * ws.lower_q[i];
        double have = lower_evaluate(inst.risks()[i], inst.scenarios(), row);
        worst = std::max(worst, need - have);
    }
    return std::max(0.0, worst);
}

}  // namespace detail

/**
 * @brief Splice two policies into one whose risks nearly dominate the
 * alpha-average of the endpoint risks, on an m-fold refined scenario set.
 *
 * The subset is chosen by signed greedy rounding of test-density-weighted
 * service integrals toward their alpha-fraction targets, improved by toggle
 * passes (budget 10 per refined atom), and compared against the lift of the
 * recursive solution at half the refinement (whose deficit it therefore
 * never exceeds beyond roundoff), a stratified per-block quota selection and
 * its toggle-polished variant (whose mass errors shrink like one copy
 * weight), the empty subset, and the full subset. alpha = 0 and alpha = 1
 * return an endpoint policy with deficit exactly 0.
 */
inline MixResult mix_policies(const RCPInstance& inst, const Policy& p, const Policy& q,
                              double alpha, std::size_t m,
                              const TestDensityFamily* family = nullptr) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw DomainError("mix_policies: alpha must lie in [0, 1]");
    if (m == 0)
        throw DomainError("mix_policies: refinement factor must be positive");
    if (p.rows() != inst.atoms() || q.rows() != inst.atoms())
        throw Misalignment("mix_policies: policies must live on the base scenario set");

    RCPInstance fine = inst.with_refined_scenarios(m);
    Policy pm = duplicate_rows(p, m);
    Policy qm = duplicate_rows(q, m);
    std::size_t atoms = fine.atoms();
    std::size_t n = fine.n_services();

    detail::MixWorkspace ws;
    ws.rows_p = service_table(fine, pm);
    ws.rows_q = service_table(fine, qm);
    ws.lower_p.resize(n);
    ws.lower_q.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ws.lower_p[i] = lower_evaluate(fine.risks()[i], fine.scenarios(), ws.rows_p[i]);
        ws.lower_q[i] = lower_evaluate(fine.risks()[i], fine.scenarios(), ws.rows_q[i]);
    }

    auto finish = [&](std::vector<char> in) {
        MixResult out;
        out.refine_factor = m;
        out.epsilon = detail::subset_epsilon(fine, ws, alpha, in);
        out.policy.dim = pm.dim;
        out.policy.values.resize(pm.values.size());
        for (std::size_t k = 0; k < atoms; ++k) {
            auto src = in[k] ? pm.row(k) : qm.row(k);
            std::copy(src.begin(), src.end(), out.policy.values.begin() + k * pm.dim);
        }
        for (std::size_t k = 0; k < atoms; ++k)
            if (in[k])
                out.subset.push_back(k);
        return out;
    };

    if (alpha == 0.0)
        return finish(std::vector<char>(atoms, 0));
    if (alpha == 1.0)
        return finish(std::vector<char>(atoms, 1));

    std::uint64_t seed = derive_seed(inst.seed(), 0x3A1D0000 + m);
    TestDensityFamily local;
    if (family == nullptr) {
        local = default_test_densities(fine, pm, qm, seed);
        family = &local;
    }

    // component c: the subset's share of one test-density-weighted service
    // integral, for each density, service, and endpoint; targets are the
    // alpha fraction of the totals
    std::size_t n_comp = family->densities.size() * n * 2;
    std::vector<std::vector<double>> tau(n_comp, std::vector<double>(atoms));
    std::vector<double> dev(n_comp);
    {
        std::size_t c = 0;
        for (const auto& zeta : family->densities) {
            for (std::size_t i = 0; i < n; ++i) {
                for (int side = 0; side < 2; ++side, ++c) {
                    const auto& rows = side == 0 ? ws.rows_p : ws.rows_q;
                    for (std::size_t k = 0; k < atoms; ++k)
                        tau[c][k] = fine.scenarios().weight(k) * zeta[k] * rows[i][k];
                    dev[c] = -alpha * stable_total(tau[c]);
                }
            }
        }
    }

    auto delta_toggle = [&](std::size_t k, bool adding) {
        double d = 0.0;
        for (std::size_t c = 0; c < n_comp; ++c) {
            double t = adding ? tau[c][k] : -tau[c][k];
            d += (dev[c] + t) * (dev[c] + t) - dev[c] * dev[c];
        }
        return d;
    };
    auto apply_toggle = [&](std::size_t k, bool adding) {
        for (std::size_t c = 0; c < n_comp; ++c)
            dev[c] += adding ? tau[c][k] : -tau[c][k];
    };

    auto toggle_passes = [&](std::vector<char>& in) {
        std::size_t budget = 10 * atoms;
        bool improved = true;
        while (improved && budget > 0) {
            improved = false;
            for (std::size_t k = 0; k < atoms && budget > 0; ++k) {
                bool adding = !in[k];
                if (delta_toggle(k, adding) < 0.0) {
                    in[k] ^= 1;
                    apply_toggle(k, adding);
                    improved = true;
                    --budget;
                }
            }
            if (improved || budget == 0)
                continue;
            // pair swaps escape the single-toggle local minima: move one
            // selected atom out and an unselected one in when the exchange
            // lowers the squared deviation
            for (std::size_t k = 0; k < atoms && budget > 0; ++k) {
                if (!in[k])
                    continue;
                for (std::size_t j = 0; j < atoms && budget > 0; ++j) {
                    if (in[j])
                        continue;
                    double d = 0.0;
                    for (std::size_t c = 0; c < n_comp; ++c) {
                        double t = dev[c] - tau[c][k] + tau[c][j];
                        d += t * t - dev[c] * dev[c];
                    }
                    if (d < 0.0) {
                        in[k] = 0;
                        in[j] = 1;
                        for (std::size_t c = 0; c < n_comp; ++c)
                            dev[c] += tau[c][j] - tau[c][k];
                        improved = true;
                        --budget;
                        break;
                    }
                }
            }
        }
    };
    auto reset_dev = [&](const std::vector<char>& in) {
        for (std::size_t c = 0; c < n_comp; ++c) {
            dev[c] = -alpha * stable_total(tau[c]);
            for (std::size_t k = 0; k < atoms; ++k)
                if (in[k])
                    dev[c] += tau[c][k];
        }
    };

    std::vector<char> greedy(atoms, 0);
    {
        std::vector<std::size_t> order(atoms);
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> key(atoms, 0.0);
        for (std::size_t k = 0; k < atoms; ++k)
            for (std::size_t c = 0; c < n_comp; ++c)
                key[k] = std::max(key[k], std::abs(tau[c][k]));
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
        for (std::size_t k : order) {
            if (delta_toggle(k, true) < 0.0) {
                greedy[k] = 1;
                apply_toggle(k, true);
            }
        }
        toggle_passes(greedy);
    }

    // stratified quota selection: within each base atom's block of m copies,
    // take the prefix whose mass is closest to the alpha share of the block.
    // Every block's mass error is at most half a copy weight, so the deficit
    // shrinks with the split factor regardless of the service values; a
    // toggle-polished variant lets the test densities trade those errors off
    // across blocks
    std::vector<char> quota;
    std::vector<char> quota_polished;
    if (m > 1) {
        quota.assign(atoms, 0);
        for (std::size_t k = 0; k < inst.atoms(); ++k) {
            double group = 0.0;
            for (std::size_t j = 0; j < m; ++j)
                group += fine.scenarios().weight(k * m + j);
            double target = alpha * group;
            double run = 0.0;
            double best_err = target;
            std::size_t len = 0;
            for (std::size_t j = 0; j < m; ++j) {
                run += fine.scenarios().weight(k * m + j);
                if (std::abs(run - target) < best_err) {
                    best_err = std::abs(run - target);
                    len = j + 1;
                }
            }
            for (std::size_t j = 0; j < len; ++j)
                quota[k * m + j] = 1;
        }
        quota_polished = quota;
        reset_dev(quota_polished);
        toggle_passes(quota_polished);
    }

    std::vector<std::vector<char>> candidates;
    if (m > 1) {
        // lift of the recursive solution: each selected coarse atom expands
        // to its block of m/d copies, so its deficit carries over unchanged
        // up to the ulp effects of re-refinement
        std::size_t d = m % 2 == 0 ? m / 2 : 1;
        MixResult subres = mix_policies(inst, p, q, alpha, d);
        std::vector<char> lifted(atoms, 0);
        std::size_t block = m / d;
        for (std::size_t idx : subres.subset) {
            std::size_t base_atom = idx / d;
            std::size_t j = idx % d;
            for (std::size_t b = 0; b < block; ++b)
                lifted[base_atom * m + j * block + b] = 1;
        }
        candidates.push_back(std::move(lifted));
        candidates.push_back(std::move(quota));
        candidates.push_back(std::move(quota_polished));
    }
    candidates.push_back(std::move(greedy));
    candidates.emplace_back(atoms, 0);
    candidates.emplace_back(atoms, 1);

    MixResult best;
    bool have = false;
    for (auto& cand : candidates) {
        MixResult r = finish(std::move(cand));
        if (!have || r.epsilon < best.epsilon) {
            best = std::move(r);
            have = true;
        }
    }
    return best;
}

/// Per-service shortfall of a mixed policy's lower risks against the
/// alpha-average of the endpoints, all measured on the refined set the
/// mixed policy lives on. Zero means the mixture dominates the average.
inline std::vector<double> mixture_risk_deficit(const RCPInstance& inst, const Policy& p,
                                                const Policy& q, double alpha,
                                                const Policy& mixed) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw DomainError("mixture_risk_deficit: alpha must lie in [0, 1]");
    if (p.rows() != inst.atoms() || q.rows() != inst.atoms())
        throw Misalignment("mixture_risk_deficit: endpoint policies must live on the base set");
    if (mixed.rows() == 0 || mixed.rows() % inst.atoms() != 0)
        throw Misalignment("mixture_risk_deficit: mixed policy must live on a refined set");
    std::size_t m = mixed.rows() / inst.atoms();
    RCPInstance fine = inst.with_refined_scenarios(m);
    Policy pm = duplicate_rows(p, m);
    Policy qm = duplicate_rows(q, m);
    auto rows_p = service_table(fine, pm);
    auto rows_q = service_table(fine, qm);
    auto rows_mix = service_table(fine, mixed);
    std::vector<double> out(fine.n_services());
    for (std::size_t i = 0; i < fine.n_services(); ++i) {
        double need =
            alpha * lower_evaluate(fine.risks()[i], fine.scenarios(), rows_p[i]) +
            (1.0 - alpha) * lower_evaluate(fine.risks()[i], fine.scenarios(), rows_q[i]);
        double have = lower_evaluate(fine.risks()[i], fine.scenarios(), rows_mix[i]);
        out[i] = std::max(0.0, need - have);
    }
    return out;
}

}  // namespace riskalloc
