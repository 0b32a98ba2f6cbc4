#pragma once

// Shared instance builders for the tests. Everything here goes through the
// public configuration surface, so the fixtures double as construction tests.

#include <vector>

#include "riskalloc/generators.hpp"
#include "riskalloc/instance.hpp"

namespace fixtures {

/// One-atom identity instance: f = p on the grid {0, 1/(g-1), ..., 1},
/// objective x, X = [0, 1], expectation risk. Optimal value 1.
inline riskalloc::InstanceConfig toy_config(std::size_t grid = 3) {
    using namespace riskalloc;
    InstanceConfig cfg;
    cfg.points = {{1.0}};
    cfg.weights = {1.0};
    std::vector<std::vector<double>> cands;
    std::vector<std::vector<std::vector<double>>> values(1);
    values[0].assign(1, std::vector<double>(grid));
    for (std::size_t c = 0; c < grid; ++c) {
        double p = grid == 1 ? 1.0
                             : static_cast<double>(c) / static_cast<double>(grid - 1);
        cands.push_back({p});
        values[0][0][c] = p;
    }
    cfg.service = ServiceSpec::table(1, cfg.points, cands, values);
    cfg.risks = {RiskSpec::expectation()};
    cfg.objective = Utility::weighted_sum({1.0});
    cfg.x_box.lo = {0.0};
    cfg.x_box.hi = {1.0};
    cfg.policy_class = PolicyClass::uniform_box(1, 1.0, grid);
    cfg.witness_x = std::vector<double>{0.0};
    Policy w;
    w.dim = 1;
    w.values = {1.0};
    cfg.witness_policy = w;
    cfg.seed = 7;
    return cfg;
}

/// Seeded single-service table instance for brute-force cross-checks:
/// K atoms, per-atom grid of `grid` actions, strictly positive tabulated
/// values, one risk of the caller's choice.
inline riskalloc::InstanceConfig tiny_table_config(std::uint64_t seed, std::size_t K,
                                                   std::size_t grid,
                                                   const riskalloc::RiskSpec& risk) {
    using namespace riskalloc;
    SplitMix64 rng(derive_seed(seed, 0x71AB1E));
    InstanceConfig cfg;
    cfg.seed = seed;
    cfg.points.assign(K, std::vector<double>(1));
    cfg.weights.clear();
    double total = 0.0;
    std::vector<double> raw(K);
    for (std::size_t k = 0; k < K; ++k) {
        cfg.points[k][0] = rng.uniform(0.5, 1.5);
        raw[k] = rng.uniform(0.2, 1.0);
        total += raw[k];
    }
    for (std::size_t k = 0; k < K; ++k)
        raw[k] /= total;
    double t = stable_total(raw);
    for (double& w : raw)
        w /= t;
    cfg.weights = raw;

    std::vector<std::vector<double>> cands;
    for (std::size_t c = 0; c < grid; ++c)
        cands.push_back({grid == 1
                             ? 1.0
                             : static_cast<double>(c) / static_cast<double>(grid - 1)});
    std::vector<std::vector<std::vector<double>>> values(1);
    values[0].assign(K, std::vector<double>(grid));
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t c = 0; c < grid; ++c)
            values[0][k][c] = rng.uniform(0.3, 2.0);

    cfg.service = ServiceSpec::table(1, cfg.points, cands, values);
    cfg.risks = {risk};
    cfg.objective = Utility::weighted_sum({1.0});
    cfg.x_box.lo = {-0.1};
    cfg.x_box.hi = {1.6};
    cfg.policy_class = PolicyClass::uniform_box(1, 1.0, grid);
    cfg.witness_x = std::vector<double>{-0.05};
    Policy w;
    w.dim = 1;
    w.values.assign(K, 0.0);
    cfg.witness_policy = w;
    cfg.dual.max_iters = 120;
    cfg.dual.eta0 = 0.5;
    return cfg;
}

/// Two-service table instance (shared scalar action) so that vector risks,
/// multipliers, and mixing deficits have more than one component to see.
inline riskalloc::InstanceConfig two_service_config(std::uint64_t seed, std::size_t K,
                                                    std::size_t grid,
                                                    const riskalloc::RiskSpec& r0,
                                                    const riskalloc::RiskSpec& r1) {
    using namespace riskalloc;
    SplitMix64 rng(derive_seed(seed, 0x2B0B));
    InstanceConfig cfg;
    cfg.seed = seed;
    cfg.points.assign(K, std::vector<double>(1));
    cfg.weights.assign(K, 1.0 / static_cast<double>(K));
    for (std::size_t k = 0; k < K; ++k)
        cfg.points[k][0] = rng.uniform(0.5, 1.5);

    std::vector<std::vector<double>> cands;
    for (std::size_t c = 0; c < grid; ++c)
        cands.push_back({grid == 1
                             ? 1.0
                             : static_cast<double>(c) / static_cast<double>(grid - 1)});
    std::vector<std::vector<std::vector<double>>> values(2);
    for (std::size_t i = 0; i < 2; ++i) {
        values[i].assign(K, std::vector<double>(grid));
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t c = 0; c < grid; ++c)
                values[i][k][c] = rng.uniform(0.3, 2.0);
    }

    cfg.service = ServiceSpec::table(2, cfg.points, cands, values);
    cfg.risks = {r0, r1};
    cfg.objective = Utility::weighted_sum({1.0, 1.0});
    cfg.x_box.lo = {-0.1, -0.1};
    cfg.x_box.hi = {1.6, 1.6};
    cfg.policy_class = PolicyClass::uniform_box(1, 1.0, grid);
    cfg.witness_x = std::vector<double>{-0.05, -0.05};
    Policy w;
    w.dim = 1;
    w.values.assign(K, 0.0);
    cfg.witness_policy = w;
    cfg.dual.max_iters = 120;
    cfg.dual.eta0 = 0.5;
    return cfg;
}

}  // namespace fixtures
