#pragma once

#include <optional>
#include <span>
#include <vector>

#include "riskalloc/common.hpp"
#include "riskalloc/policy.hpp"
#include "riskalloc/risk.hpp"
#include "riskalloc/scenario.hpp"
#include "riskalloc/service.hpp"
#include "riskalloc/utility.hpp"

namespace riskalloc {

enum class InnerMethod { Exhaustive, Coordinate, Minimax };

inline const char* inner_method_name(InnerMethod m) {
    switch (m) {
        case InnerMethod::Exhaustive: return "exhaustive";
        case InnerMethod::Coordinate: return "coordinate";
        case InnerMethod::Minimax: return "minimax";
    }
    return "?";
}

struct DualOptions {
    std::size_t max_iters = 500;
    double eta0 = 1.0;
    InnerMethod method = InnerMethod::Exhaustive;
    std::optional<std::uint64_t> seed;  // defaults to the instance seed
    std::size_t refine_factor = 1;      // extra refinement for primal recovery
    double tol = 1e-6;                  // feasibility tolerance for recovered points
};

struct Box {
    std::vector<double> lo;
    std::vector<double> hi;
};

struct SlaterWitness {
    std::vector<double> x;
    Policy policy;
    double margin = 0.0;
};

/// Parsed problem description; cross-validation happens in build_instance.
struct InstanceConfig {
    std::vector<std::vector<double>> points;
    std::vector<double> weights;
    std::optional<ServiceSpec> service;
    RiskVector risks;
    std::optional<Utility> objective;
    std::vector<Utility> constraints;
    Box x_box;
    std::optional<PolicyClass> policy_class;
    std::optional<std::vector<double>> witness_x;
    std::optional<Policy> witness_policy;
    std::uint64_t seed = 0;
    DualOptions dual;
};

/**
 * @brief Validated allocation problem: maximize g0(x) subject to
 * x_i <= -rho_i(-f_i(p(H), H)), g(x) >= 0, x in X, p admissible.
 *
 * Construction caches the per-atom candidate actions and their service values
 * (validating that every value is finite) and verifies strict feasibility at
 * a Slater point, either the supplied witness or the best of 1000 seeded
 * probe draws. The witness is kept: it is a guaranteed feasible fallback for
 * primal reporting.
 */
class RCPInstance {
public:
    const ScenarioSet& scenarios() const { return scen_; }
    const ServiceSpec& service() const { return service_; }
    const RiskVector& risks() const { return risks_; }
    const Utility& objective() const { return objective_; }
    const std::vector<Utility>& constraints() const { return constraints_; }
    const Box& x_box() const { return x_box_; }
    const PolicyClass& policy_class() const { return pclass_; }
    const SlaterWitness& witness() const { return witness_; }
    std::uint64_t seed() const { return seed_; }
    const DualOptions& dual_options() const { return dual_; }

    std::size_t n_services() const { return service_.dim(); }
    std::size_t atoms() const { return scen_.size(); }

    std::size_t n_constraint_rows() const {
        std::size_t n = 0;
        for (const auto& g : constraints_)
            n += g.rows();
        return n;
    }

    /// True when no Min utility appears anywhere, i.e. the dual x-objective
    /// decomposes per coordinate.
    bool x_separable() const {
        if (!objective_.separable())
            return false;
        for (const auto& g : constraints_)
            if (!g.separable())
                return false;
        return true;
    }

    const std::vector<std::vector<double>>& candidates(std::size_t k) const { return cands_[k]; }

    /// Cached service values of candidate c at atom k (n_services entries).
    std::span<const double> candidate_values(std::size_t k, std::size_t c) const {
        return {svc_[k].data() + c * service_.dim(), service_.dim()};
    }

    void evaluate_service(std::span<const double> p, std::size_t k, std::span<double> out) const {
        service_.evaluate(p, scen_.point(k), out);
    }

    /// Same instance sampled on refine(scenarios, m); witness rows duplicate.
    RCPInstance with_refined_scenarios(std::size_t m) const {
        RCPInstance inst(*this);
        inst.scen_ = refine(scen_, m);
        inst.witness_.policy = duplicate_rows(witness_.policy, m);
        inst.rebuild_caches();
        return inst;
    }

    friend RCPInstance build_instance(const InstanceConfig& cfg);

private:
    RCPInstance(ScenarioSet scen, ServiceSpec service, RiskVector risks, Utility objective,
                std::vector<Utility> constraints, Box x_box, PolicyClass pclass,
                std::uint64_t seed, DualOptions dual)
        : scen_(std::move(scen)), service_(std::move(service)), risks_(std::move(risks)),
          objective_(std::move(objective)), constraints_(std::move(constraints)),
          x_box_(std::move(x_box)), pclass_(std::move(pclass)), seed_(seed), dual_(dual) {}

    void rebuild_caches() {
        cands_.assign(scen_.size(), {});
        svc_.assign(scen_.size(), {});
        std::size_t n = service_.dim();
        std::vector<double> out(n);
        for (std::size_t k = 0; k < scen_.size(); ++k) {
            cands_[k] = pclass_.candidates(scen_.point(k));
            if (cands_[k].empty())
                throw SchemaError("policy grid admits no candidate at some atom");
            svc_[k].resize(cands_[k].size() * n);
            for (std::size_t c = 0; c < cands_[k].size(); ++c) {
                service_.evaluate(cands_[k][c], scen_.point(k), out);
                for (std::size_t i = 0; i < n; ++i) {
                    if (!std::isfinite(out[i]))
                        throw DomainError("service value not finite on the policy grid");
                    svc_[k][c * n + i] = out[i];
                }
            }
        }
    }

    ScenarioSet scen_;
    ServiceSpec service_;
    RiskVector risks_;
    Utility objective_;
    std::vector<Utility> constraints_;
    Box x_box_;
    PolicyClass pclass_;
    SlaterWitness witness_;
    std::uint64_t seed_ = 0;
    DualOptions dual_;
    std::vector<std::vector<std::vector<double>>> cands_;
    std::vector<std::vector<double>> svc_;
};

/// N x K service value table of a policy: rows[i] is the random variable
/// f_i(p(h_k), h_k) over atoms. Refinement-invariant for duplicated policies.
inline std::vector<RandomVariable> service_table(const RCPInstance& inst, const Policy& p) {
    if (p.rows() != inst.atoms() || p.dim != inst.policy_class().dim())
        throw Misalignment("service_table: policy not aligned with scenario set");
    std::size_t n = inst.n_services();
    std::vector<RandomVariable> rows(n, RandomVariable(inst.atoms()));
    std::vector<double> out(n);
    for (std::size_t k = 0; k < inst.atoms(); ++k) {
        inst.evaluate_service(p.row(k), k, out);
        for (std::size_t i = 0; i < n; ++i)
            rows[i][k] = out[i];
    }
    return rows;
}

/// Lower risk evaluations (-rho_i(-f_i)) of a policy, one entry per service.
inline std::vector<double> risk_values(const RCPInstance& inst, const Policy& p) {
    auto table = service_table(inst, p);
    std::vector<double> r(inst.n_services());
    for (std::size_t i = 0; i < inst.n_services(); ++i)
        r[i] = lower_evaluate(inst.risks()[i], inst.scenarios(), table[i]);
    return r;
}

struct Slack {
    std::vector<double> risk;  // lower_evaluate_i(f_i(p)) - x_i
    std::vector<double> util;  // constraint rows g_j(x)

    double min() const {
        double m = std::numeric_limits<double>::infinity();
        for (double v : risk)
            m = std::min(m, v);
        for (double v : util)
            m = std::min(m, v);
        return m;
    }
};

inline void check_point(const RCPInstance& inst, std::span<const double> x, const Policy& p) {
    if (x.size() != inst.n_services())
        throw Misalignment("x dimension must match the number of services");
    if (p.rows() != inst.atoms() || p.dim != inst.policy_class().dim())
        throw Misalignment("policy not aligned with scenario set");
}

inline Slack constraint_slack(const RCPInstance& inst, std::span<const double> x, const Policy& p) {
    check_point(inst, x, p);
    Slack s;
    s.risk = risk_values(inst, p);
    for (std::size_t i = 0; i < s.risk.size(); ++i)
        s.risk[i] -= x[i];
    s.util.resize(inst.n_constraint_rows());
    std::size_t at = 0;
    for (const auto& g : inst.constraints()) {
        g.value(x, {s.util.data() + at, g.rows()});
        at += g.rows();
    }
    return s;
}

/// g0(x) when (x, p) is feasible within tol, empty otherwise.
inline std::optional<double> feasible_value(const RCPInstance& inst, std::span<const double> x,
                                            const Policy& p, double tol) {
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] < inst.x_box().lo[i] - tol || x[i] > inst.x_box().hi[i] + tol)
            return std::nullopt;
    for (std::size_t k = 0; k < p.rows(); ++k)
        if (!inst.policy_class().admissible_row(p.row(k), inst.scenarios().point(k), tol))
            return std::nullopt;
    if (constraint_slack(inst, x, p).min() < -tol)
        return std::nullopt;
    return inst.objective().scalar(x);
}

namespace detail {

inline double witness_margin(const RCPInstance& inst, std::span<const double> x, const Policy& p) {
    return constraint_slack(inst, x, p).min();
}

inline Policy random_admissible_policy(const RCPInstance& inst, SplitMix64& rng) {
    const auto& pc = inst.policy_class();
    Policy p;
    p.dim = pc.dim();
    p.values.resize(inst.atoms() * pc.dim());
    for (std::size_t k = 0; k < inst.atoms(); ++k) {
        auto row = p.row(k);
        double total = 0.0;
        for (std::size_t d = 0; d < pc.dim(); ++d) {
            row[d] = rng.uniform(0.0, pc.upper()[d]);
            total += row[d];
        }
        if (pc.kind() == PolicyClassKind::Budget) {
            double cap = pc.budget_total(inst.scenarios().point(k));
            if (total > cap) {
                double scale = cap / total;
                for (std::size_t d = 0; d < pc.dim(); ++d)
                    row[d] *= scale;
            }
        }
    }
    return p;
}

}  // namespace detail

inline RCPInstance build_instance(const InstanceConfig& cfg) {
    if (!cfg.service)
        throw SchemaError("instance: missing service");
    if (!cfg.objective)
        throw SchemaError("instance: missing utility");
    if (!cfg.policy_class)
        throw SchemaError("instance: missing policy class");

    ScenarioSet scen = make_scenario_set(cfg.points, cfg.weights);
    std::size_t n = cfg.service->dim();

    if (cfg.risks.size() != n)
        throw SchemaError("instance: needs one risk per service component");
    if (cfg.objective->kind() == UtilityKind::Callback)
        throw NonconcaveUtility("instance: callback objective is outside the concave family");
    if (cfg.objective->kind() == UtilityKind::AffineFloor)
        throw SchemaError("instance: affine_floor is constraint-only, the objective must be scalar");
    if (cfg.objective->dim() != n)
        throw SchemaError("instance: utility dimension must match the number of services");
    for (const auto& g : cfg.constraints) {
        if (g.kind() == UtilityKind::Callback)
            throw NonconcaveUtility("instance: callback constraint is outside the concave family");
        if (g.dim() != n)
            throw SchemaError("instance: constraint dimension must match the number of services");
    }
    if (cfg.x_box.lo.size() != n || cfg.x_box.hi.size() != n)
        throw SchemaError("instance: x box must have one interval per service");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(cfg.x_box.lo[i]) || !std::isfinite(cfg.x_box.hi[i]) ||
            cfg.x_box.lo[i] > cfg.x_box.hi[i])
            throw SchemaError("instance: x box needs finite lo <= hi");
    }
    if (cfg.objective->kind() == UtilityKind::SumLog) {
        for (double lo : cfg.x_box.lo)
            if (!(cfg.objective->offset() + lo > 0.0))
                throw DomainError("instance: sum_log offset leaves X outside its domain");
    }

    RCPInstance inst(std::move(scen), *cfg.service, cfg.risks, *cfg.objective, cfg.constraints,
                     cfg.x_box, *cfg.policy_class, cfg.seed, cfg.dual);
    inst.rebuild_caches();

    constexpr double kStrictness = 1e-6;
    if (cfg.witness_x || cfg.witness_policy) {
        if (!cfg.witness_x || !cfg.witness_policy)
            throw SchemaError("instance: a Slater witness needs both x and policy");
        check_point(inst, *cfg.witness_x, *cfg.witness_policy);
        for (std::size_t i = 0; i < n; ++i)
            if ((*cfg.witness_x)[i] < inst.x_box().lo[i] || (*cfg.witness_x)[i] > inst.x_box().hi[i])
                throw DomainError("instance: Slater witness x outside X");
        for (std::size_t k = 0; k < inst.atoms(); ++k)
            if (!inst.policy_class().admissible_row(cfg.witness_policy->row(k),
                                                    inst.scenarios().point(k)))
                throw InadmissiblePolicy("instance: Slater witness policy not admissible");
        double margin = detail::witness_margin(inst, *cfg.witness_x, *cfg.witness_policy);
        if (margin < kStrictness)
            throw SlaterNotVerified("instance: witness margin " + std::to_string(margin) +
                                    " below strictness 1e-6");
        inst.witness_ = SlaterWitness{*cfg.witness_x, *cfg.witness_policy, margin};
    } else {
        SplitMix64 rng(derive_seed(cfg.seed, 0x51a7e2));
        SlaterWitness best;
        best.margin = -std::numeric_limits<double>::infinity();
        std::vector<double> x(n);
        for (int trial = 0; trial < 1000; ++trial) {
            for (std::size_t i = 0; i < n; ++i)
                x[i] = rng.uniform(inst.x_box().lo[i], inst.x_box().hi[i]);
            Policy p = detail::random_admissible_policy(inst, rng);
            double margin = detail::witness_margin(inst, x, p);
            if (margin > best.margin)
                best = SlaterWitness{x, std::move(p), margin};
        }
        if (best.margin < kStrictness)
            throw SlaterNotVerified("instance: no strictly feasible point found in 1000 draws; "
                                    "best margin " + std::to_string(best.margin));
        inst.witness_ = std::move(best);
    }
    return inst;
}

}  // namespace riskalloc
