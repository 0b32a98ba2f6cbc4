#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "riskalloc/riskalloc.hpp"

using namespace riskalloc;

namespace {

Policy constant_policy(const RCPInstance& inst, double v) {
    Policy p;
    p.dim = inst.policy_class().dim();
    p.values.assign(inst.atoms() * p.dim, v);
    return p;
}

/// Two-atom single-service instance with f = h * p on the grid {0, 1}.
RCPInstance two_atom_instance(RiskSpec risk) {
    InstanceConfig cfg;
    cfg.points = {{1.0}, {2.0}};
    cfg.weights = {0.5, 0.5};
    cfg.service = ServiceSpec::table(1, cfg.points, {{0.0}, {1.0}},
                                     {{{0.0, 1.0}, {0.0, 2.0}}});
    cfg.risks = {std::move(risk)};
    cfg.objective = Utility::weighted_sum({1.0});
    cfg.x_box = Box{{0.0}, {1.0}};
    cfg.policy_class = PolicyClass::uniform_box(1, 1.0, 2);
    cfg.witness_x = std::vector<double>{0.0};
    Policy w;
    w.dim = 1;
    w.values = {1.0, 1.0};
    cfg.witness_policy = w;
    cfg.seed = 11;
    return build_instance(cfg);
}

double recompute_policy_objective(const RCPInstance& inst, std::span<const double> lambda,
                                  const Policy& p) {
    std::vector<double> lower = risk_values(inst, p);
    long double v = 0;
    for (std::size_t i = 0; i < lower.size(); ++i)
        v += static_cast<long double>(lambda[i]) * lower[i];
    return static_cast<double>(v);
}

}  // namespace

TEST_CASE("multiplier validation rejects negatives and misaligned vectors") {
    RCPInstance inst = build_instance(fixtures::toy_config());
    Policy p = constant_policy(inst, 1.0);
    std::vector<double> x = {0.5};

    Multipliers bad = Multipliers::zeros(inst);
    bad.risk[0] = -0.25;
    REQUIRE_THROWS_AS(lagrangian(inst, x, p, bad), NegativeMultiplier);
    REQUIRE_THROWS_AS(dual_value(inst, bad, InnerMethod::Exhaustive, 0), NegativeMultiplier);

    Multipliers wrong;
    wrong.util = {};
    wrong.risk = {0.5, 0.5};
    REQUIRE_THROWS_AS(lagrangian(inst, x, p, wrong), Misalignment);
    REQUIRE_THROWS_AS(maximize_over_x(inst, wrong), Misalignment);
    REQUIRE_THROWS_AS(maximize_over_policy(inst, wrong.risk, InnerMethod::Exhaustive, 0),
                      Misalignment);
}

TEST_CASE("lagrangian matches hand arithmetic on the toy problem") {
    RCPInstance inst = build_instance(fixtures::toy_config());
    Policy p_one = constant_policy(inst, 1.0);

    // lambda = 0: L reduces to the objective
    Multipliers zero = Multipliers::zeros(inst);
    std::vector<double> x = {0.5};
    REQUIRE(lagrangian(inst, x, p_one, zero) == 0.5);

    // lambda_rho = 2: L = x + 2 (E[p] - x) = 0.5 + 2 * 0.5
    Multipliers two = zero;
    two.risk[0] = 2.0;
    REQUIRE(lagrangian(inst, x, p_one, two) == 1.5);

    // zero slack: L equals the objective for every multiplier
    std::vector<double> x_tight = {1.0};
    REQUIRE(lagrangian(inst, x_tight, p_one, two) == 1.0);
    Multipliers seven = zero;
    seven.risk[0] = 7.0;
    REQUIRE(lagrangian(inst, x_tight, p_one, seven) == 1.0);
}

TEST_CASE("x-part maximization picks the right corner on the toy problem") {
    RCPInstance inst = build_instance(fixtures::toy_config());
    REQUIRE(inst.x_separable());

    // phi(x) = (1 - lambda_rho) x on [0, 1]
    Multipliers m = Multipliers::zeros(inst);
    m.risk[0] = 0.5;
    InnerXResult up = maximize_over_x(inst, m);
    REQUIRE(up.x.size() == 1);
    REQUIRE(std::abs(up.x[0] - 1.0) <= 1e-9);
    REQUIRE(std::abs(up.value - 0.5) <= 1e-9);

    m.risk[0] = 2.0;
    InnerXResult down = maximize_over_x(inst, m);
    REQUIRE(std::abs(down.x[0] - 0.0) <= 1e-9);
    REQUIRE(std::abs(down.value - 0.0) <= 1e-12);

    // flat slice: ties resolve to the lowest corner
    m.risk[0] = 1.0;
    InnerXResult flat = maximize_over_x(inst, m);
    REQUIRE(flat.x[0] == 0.0);
    REQUIRE(std::abs(flat.value) <= 1e-12);
}

TEST_CASE("x-part maximization settles independent coordinates independently") {
    InstanceConfig cfg = fixtures::two_service_config(21, 2, 3, RiskSpec::expectation(),
                                                      RiskSpec::expectation());
    RCPInstance inst = build_instance(cfg);
    REQUIRE(inst.x_separable());

    Multipliers m = Multipliers::zeros(inst);
    m.risk = {0.5, 2.0};
    InnerXResult r = maximize_over_x(inst, m);
    // coefficients 1 - 0.5 > 0 and 1 - 2 < 0 push opposite corners of
    // [-0.1, 1.6]^2
    REQUIRE(std::abs(r.x[0] - 1.6) <= 1e-9);
    REQUIRE(std::abs(r.x[1] + 0.1) <= 1e-9);
    REQUIRE(std::abs(r.value - (0.5 * 1.6 + (-1.0) * (-0.1))) <= 1e-9);
    REQUIRE(std::abs(r.value - oracle::affine_x_sup(inst, m)) <= 1e-9);
}

TEST_CASE("policy maximization hand examples on a two-atom grid") {
    RCPInstance inst = two_atom_instance(RiskSpec::expectation());
    std::vector<double> lambda = {1.0};

    InnerPolicyResult best = maximize_over_policy(inst, lambda, InnerMethod::Exhaustive, 0);
    REQUIRE(best.value == 1.5);
    REQUIRE(best.policy.values == std::vector<double>{1.0, 1.0});

    // lambda = 0 leaves every assignment tied; the lexicographically first
    // grid point wins
    std::vector<double> zero = {0.0};
    InnerPolicyResult tie = maximize_over_policy(inst, zero, InnerMethod::Exhaustive, 0);
    REQUIRE(tie.value == 0.0);
    REQUIRE(tie.policy.values == std::vector<double>{0.0, 0.0});

    RCPInstance tail = two_atom_instance(RiskSpec::cvar(0.5));
    InnerPolicyResult worst_half = maximize_over_policy(tail, lambda, InnerMethod::Exhaustive, 0);
    // lower CVaR_{0.5} of f = [1, 2] is 1; every other assignment scores 0
    REQUIRE(worst_half.value == 1.0);
    REQUIRE(worst_half.policy.values == std::vector<double>{1.0, 1.0});
}

TEST_CASE("exhaustive policy search matches the brute-force oracle") {
    std::vector<RiskSpec> kinds = {RiskSpec::expectation(), RiskSpec::cvar(0.6),
                                   RiskSpec::mad(0.4), RiskSpec::mean_cvar(0.5, 0.4)};
    SplitMix64 rng(414243);
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const RiskSpec& risk = kinds[seed % kinds.size()];
        RCPInstance inst = build_instance(fixtures::tiny_table_config(seed, 3, 3, risk));
        std::vector<double> lambda = {rng.uniform(0.0, 2.0)};
        InnerPolicyResult r = maximize_over_policy(inst, lambda, InnerMethod::Exhaustive, 0);
        double brute = oracle::policy_sup(inst, lambda);
        REQUIRE(std::abs(r.value - brute) <= 1e-9);
        REQUIRE(std::abs(recompute_policy_objective(inst, lambda, r.policy) - r.value) <= 1e-12);
    }
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        RCPInstance inst = build_instance(fixtures::two_service_config(
            seed, 2, 3, RiskSpec::cvar(0.5), RiskSpec::expectation()));
        std::vector<double> lambda = {rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)};
        InnerPolicyResult r = maximize_over_policy(inst, lambda, InnerMethod::Exhaustive, 0);
        REQUIRE(std::abs(r.value - oracle::policy_sup(inst, lambda)) <= 1e-9);
    }
}

TEST_CASE("grouped enumeration on refined scenarios matches the plain oracle") {
    for (std::uint64_t seed = 30; seed < 36; ++seed) {
        RiskSpec risk = (seed % 2 == 0) ? RiskSpec::cvar(0.55) : RiskSpec::mad(0.7);
        RCPInstance base = build_instance(fixtures::tiny_table_config(seed, 3, 3, risk));
        RCPInstance fine = base.with_refined_scenarios(2);
        REQUIRE(fine.atoms() == 6);
        std::vector<double> lambda = {1.25};
        InnerPolicyResult grouped = maximize_over_policy(fine, lambda, InnerMethod::Exhaustive, 0);
        double brute = oracle::policy_sup(fine, lambda);
        REQUIRE(std::abs(grouped.value - brute) <= 1e-9);
    }
}

TEST_CASE("exhaustive enumeration refuses oversized grids") {
    RCPInstance inst =
        build_instance(fixtures::tiny_table_config(3, 13, 4, RiskSpec::expectation()));
    std::vector<double> lambda = {1.0};
    REQUIRE_THROWS_AS(maximize_over_policy(inst, lambda, InnerMethod::Exhaustive, 0),
                      GridTooLarge);
}

TEST_CASE("coordinate and minimax methods agree with exhaustive where exact") {
    // with expectation risks the inner objective separates per atom, so one
    // cyclic argmax pass is exact and the fixed-density minimax round is too
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        RCPInstance inst =
            build_instance(fixtures::tiny_table_config(seed, 4, 3, RiskSpec::expectation()));
        std::vector<double> lambda = {1.5};
        double exact = maximize_over_policy(inst, lambda, InnerMethod::Exhaustive, 0).value;
        double coord = maximize_over_policy(inst, lambda, InnerMethod::Coordinate, seed).value;
        double mm = maximize_over_policy(inst, lambda, InnerMethod::Minimax, 0).value;
        REQUIRE(std::abs(coord - exact) <= 1e-12);
        REQUIRE(std::abs(mm - exact) <= 1e-12);
    }
}

TEST_CASE("local methods never exceed the exact policy supremum") {
    for (std::uint64_t seed = 50; seed < 58; ++seed) {
        RCPInstance inst =
            build_instance(fixtures::tiny_table_config(seed, 3, 4, RiskSpec::cvar(0.4)));
        std::vector<double> lambda = {0.8};
        double exact = maximize_over_policy(inst, lambda, InnerMethod::Exhaustive, 0).value;
        InnerPolicyResult coord = maximize_over_policy(inst, lambda, InnerMethod::Coordinate, seed);
        InnerPolicyResult mm = maximize_over_policy(inst, lambda, InnerMethod::Minimax, 0);
        REQUIRE(coord.value <= exact + 1e-9);
        REQUIRE(mm.value <= exact + 1e-9);
        // reported values are honest evaluations of the returned policies
        REQUIRE(std::abs(recompute_policy_objective(inst, lambda, coord.policy) - coord.value) <=
                1e-12);
        REQUIRE(std::abs(recompute_policy_objective(inst, lambda, mm.policy) - mm.value) <= 1e-12);
    }
}

TEST_CASE("dual value dominates the lagrangian and exposes its subgradient") {
    RCPInstance inst = build_instance(fixtures::tiny_table_config(9, 3, 3, RiskSpec::cvar(0.6)));
    SplitMix64 rng(777);
    for (int rep = 0; rep < 30; ++rep) {
        Multipliers m = Multipliers::zeros(inst);
        m.risk[0] = rng.uniform(0.0, 3.0);
        DualEval ev = dual_value(inst, m, InnerMethod::Exhaustive, 0);
        REQUIRE(ev.exact);

        // weak duality against arbitrary primal pairs
        for (int probe = 0; probe < 5; ++probe) {
            std::vector<double> x = {rng.uniform(inst.x_box().lo[0], inst.x_box().hi[0])};
            Policy p = detail::random_admissible_policy(inst, rng);
            REQUIRE(ev.value >= lagrangian(inst, x, p, m) - 1e-9);
        }

        // the stored slack is the slack at the inner maximizers
        Slack s = constraint_slack(inst, ev.x, ev.policy);
        REQUIRE(s.risk == ev.slack.risk);
        REQUIRE(s.util == ev.slack.util);

        // D(l') >= D(l) + <s, l' - l>: D is a sup of affine functions of
        // lambda and s is the active coefficient vector
        Multipliers other = Multipliers::zeros(inst);
        other.risk[0] = rng.uniform(0.0, 3.0);
        DualEval ev2 = dual_value(inst, other, InnerMethod::Exhaustive, 0);
        double gap = ev2.value - ev.value - ev.slack.risk[0] * (other.risk[0] - m.risk[0]);
        REQUIRE(gap >= -1e-8);
    }
}

TEST_CASE("dual function is convex along multiplier segments") {
    RCPInstance inst = build_instance(fixtures::tiny_table_config(17, 3, 3, RiskSpec::mad(0.5)));
    SplitMix64 rng(5150);
    for (int rep = 0; rep < 20; ++rep) {
        Multipliers a = Multipliers::zeros(inst), b = a, mid = a;
        a.risk[0] = rng.uniform(0.0, 3.0);
        b.risk[0] = rng.uniform(0.0, 3.0);
        mid.risk[0] = 0.5 * (a.risk[0] + b.risk[0]);
        double da = dual_value(inst, a, InnerMethod::Exhaustive, 0).value;
        double db = dual_value(inst, b, InnerMethod::Exhaustive, 0).value;
        double dm = dual_value(inst, mid, InnerMethod::Exhaustive, 0).value;
        REQUIRE(dm <= 0.5 * (da + db) + 1e-9);
    }
}

TEST_CASE("subgradient descent closes the toy problem") {
    RCPInstance inst = build_instance(fixtures::toy_config());
    DualOptions opts;
    opts.max_iters = 40;
    opts.eta0 = 1.0;
    opts.method = InnerMethod::Exhaustive;
    DualResult res = solve_dual(inst, opts);

    REQUIRE(std::abs(res.best_dual - 1.0) <= 1e-9);
    REQUIRE(res.trace.size() == 40);
    REQUIRE(res.exact_inner);
    REQUIRE(res.method == InnerMethod::Exhaustive);
    REQUIRE(res.best_iter < res.trace.size());
    REQUIRE(res.trace[res.best_iter].dual == res.best_dual);
    for (const TracePoint& tp : res.trace) {
        REQUIRE(tp.dual >= res.best_dual);
        REQUIRE(tp.policy_id < res.policies.size());
        for (double v : tp.lambda.risk)
            REQUIRE(v >= 0.0);
        for (double v : tp.lambda.util)
            REQUIRE(v >= 0.0);
    }
    for (std::size_t i = 0; i + 1 < res.trace.size(); ++i)
        REQUIRE(res.trace[i].iter < res.trace[i + 1].iter);

    // the all-on policy enters the maximizer pool once lambda turns positive
    bool has_one = false;
    for (const Policy& p : res.policies)
        has_one = has_one || p.values == std::vector<double>{1.0};
    REQUIRE(has_one);
}

TEST_CASE("subgradient descent rejects an empty iteration budget") {
    RCPInstance inst = build_instance(fixtures::toy_config());
    DualOptions opts;
    opts.max_iters = 0;
    REQUIRE_THROWS_AS(solve_dual(inst, opts), EmptyTrace);
}

TEST_CASE("dual solves are reproducible run to run") {
    RCPInstance inst = build_instance(fixtures::tiny_table_config(23, 3, 3, RiskSpec::cvar(0.5)));
    DualOptions opts;
    opts.max_iters = 60;
    opts.eta0 = 0.5;
    opts.method = InnerMethod::Coordinate;
    opts.seed = 99;
    DualResult a = solve_dual(inst, opts);
    DualResult b = solve_dual(inst, opts);
    REQUIRE(a.best_dual == b.best_dual);
    REQUIRE(a.best_iter == b.best_iter);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t t = 0; t < a.trace.size(); ++t) {
        REQUIRE(a.trace[t].dual == b.trace[t].dual);
        REQUIRE(a.trace[t].lambda.risk == b.trace[t].lambda.risk);
        REQUIRE(a.trace[t].x == b.trace[t].x);
        REQUIRE(a.trace[t].slack.risk == b.trace[t].slack.risk);
    }
}

TEST_CASE("best dual from descent is a valid upper bound on feasible values") {
    for (std::uint64_t seed : {301u, 302u, 303u}) {
        RCPInstance inst =
            build_instance(fixtures::tiny_table_config(seed, 3, 3, RiskSpec::cvar(0.6)));
        DualOptions opts;
        opts.max_iters = 80;
        opts.eta0 = 0.5;
        opts.method = InnerMethod::Exhaustive;
        DualResult res = solve_dual(inst, opts);

        // enumerate every grid policy, set x at the largest feasible level,
        // and compare the feasible objective against the dual bound
        std::size_t atoms = inst.atoms();
        std::vector<std::size_t> assign(atoms, 0);
        while (true) {
            Policy p;
            p.dim = 1;
            p.values.resize(atoms);
            for (std::size_t k = 0; k < atoms; ++k)
                p.values[k] = inst.candidates(k)[assign[k]][0];
            std::vector<double> lower = risk_values(inst, p);
            std::vector<double> x = {
                std::min(inst.x_box().hi[0], std::max(inst.x_box().lo[0], lower[0]))};
            if (auto val = feasible_value(inst, x, p, 1e-12))
                REQUIRE(res.best_dual >= *val - 1e-8);
            std::size_t k = atoms;
            bool carried = false;
            while (k-- > 0) {
                if (++assign[k] < inst.candidates(k).size()) {
                    carried = true;
                    break;
                }
                assign[k] = 0;
            }
            if (!carried)
                break;
        }
    }
}
