#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "riskalloc/riskalloc.hpp"

using namespace riskalloc;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t at = 0;
    while (true) {
        std::size_t comma = line.find(',', at);
        if (comma == std::string::npos) {
            out.push_back(line.substr(at));
            break;
        }
        out.push_back(line.substr(at, comma - at));
        at = comma + 1;
    }
    return out;
}

}  // namespace

TEST_CASE("gap study closes the toy problem at the base level") {
    RCPInstance inst = build_instance(fixtures::toy_config());
    GapStudyOptions opts;
    opts.dual.max_iters = 80;
    opts.dual.eta0 = 1.0;
    opts.dual.method = InnerMethod::Exhaustive;
    opts.dual.seed = 42;

    std::vector<std::size_t> levels = {1};
    GapReport rep = gap_study(inst, levels, opts);
    REQUIRE(rep.rows.size() == 1);
    const GapRow& row = rep.rows[0];
    REQUIRE(row.level == 1);
    REQUIRE(row.atoms == 1);
    REQUIRE(std::abs(row.dual - 1.0) <= 1e-3);
    REQUIRE(std::abs(row.primal - 1.0) <= 1e-3);
    REQUIRE(row.gap_abs == row.dual - row.primal);
    REQUIRE(row.gap_abs <= 1e-3);
    REQUIRE(row.gap_abs >= -1e-9);
    REQUIRE(row.method == InnerMethod::Exhaustive);
    REQUIRE(row.seed == derive_seed(42, 1));
}

TEST_CASE("gap study validates refinement levels") {
    RCPInstance inst = build_instance(fixtures::toy_config());
    GapStudyOptions opts;
    opts.dual.max_iters = 5;

    std::vector<std::size_t> empty;
    REQUIRE_THROWS_AS(gap_study(inst, empty, opts), DomainError);
    std::vector<std::size_t> zero = {0};
    REQUIRE_THROWS_AS(gap_study(inst, zero, opts), DomainError);
    std::vector<std::size_t> descending = {2, 1};
    REQUIRE_THROWS_AS(gap_study(inst, descending, opts), DomainError);
    std::vector<std::size_t> repeated = {2, 2};
    REQUIRE_THROWS_AS(gap_study(inst, repeated, opts), DomainError);
}

TEST_CASE("gap study reports are byte-identical across thread counts") {
    RCPInstance inst =
        build_instance(fixtures::tiny_table_config(13, 3, 3, RiskSpec::cvar(0.6)));
    std::vector<std::size_t> levels = {1, 2, 4};

    GapStudyOptions one;
    one.dual.max_iters = 60;
    one.dual.eta0 = 0.5;
    one.dual.method = InnerMethod::Exhaustive;
    one.threads = 1;
    GapStudyOptions four = one;
    four.threads = 4;

    std::ostringstream a, b;
    write_gap_csv(a, gap_study(inst, levels, one));
    write_gap_csv(b, gap_study(inst, levels, four));
    REQUIRE(a.str() == b.str());
    REQUIRE(!a.str().empty());
}

TEST_CASE("gap CSV format is pinned") {
    RCPInstance inst = build_instance(fixtures::toy_config());
    GapStudyOptions opts;
    opts.dual.max_iters = 20;
    opts.dual.seed = 7;
    std::vector<std::size_t> levels = {1, 2};
    GapReport rep = gap_study(inst, levels, opts);

    std::ostringstream os;
    write_gap_csv(os, rep);
    std::istringstream is(os.str());
    std::string line;
    REQUIRE(std::getline(is, line));
    REQUIRE(line == "m,K,primal,dual,gap_abs,gap_rel,method,seed,runtime_ms");

    for (const GapRow& row : rep.rows) {
        REQUIRE(std::getline(is, line));
        std::vector<std::string> f = split_csv_line(line);
        REQUIRE(f.size() == 9);
        REQUIRE(f[0] == std::to_string(row.level));
        REQUIRE(f[1] == std::to_string(row.atoms));
        // %.17g columns round-trip to the exact stored doubles
        REQUIRE(std::strtod(f[2].c_str(), nullptr) == row.primal);
        REQUIRE(std::strtod(f[3].c_str(), nullptr) == row.dual);
        REQUIRE(std::strtod(f[4].c_str(), nullptr) == row.gap_abs);
        REQUIRE(std::strtod(f[5].c_str(), nullptr) == row.gap_rel);
        REQUIRE(f[6] == std::string(inner_method_name(row.method)));
        REQUIRE(f[7] == std::to_string(row.seed));
        REQUIRE(f[8] == "0");  // runtime suppressed by default for reproducibility
    }
    REQUIRE(!std::getline(is, line));
}

TEST_CASE("hyperplane check certifies the dual bound from below") {
    RCPInstance inst = build_instance(fixtures::toy_config());
    DualOptions opts;
    opts.max_iters = 60;
    opts.eta0 = 1.0;
    DualResult res = solve_dual(inst, opts);

    // no sampled Lagrangian value may exceed the reported supremum
    double at_bound = hyperplane_check(inst, res.best_multipliers, res.best_dual, 2000, 5);
    REQUIRE(at_bound <= 1e-6);

    // lowering the reference by 0.5 must expose nearly that much excess
    double below = hyperplane_check(inst, res.best_multipliers, res.best_dual - 0.5, 2000, 5);
    REQUIRE(below >= 0.4);

    Multipliers bad = res.best_multipliers;
    bad.risk[0] = -1.0;
    REQUIRE_THROWS_AS(hyperplane_check(inst, bad, res.best_dual, 10, 5), NegativeMultiplier);
}

TEST_CASE("semi-infinite check equals the measured constraint violation") {
    RCPInstance inst =
        build_instance(fixtures::tiny_table_config(19, 3, 3, RiskSpec::cvar(0.55)));
    SplitMix64 rng(4242);
    Policy p = detail::random_admissible_policy(inst, rng);
    double lower = risk_values(inst, p)[0];

    std::vector<double> slack_x = {lower - 0.1};
    REQUIRE(semi_infinite_check(inst, slack_x, p, 32, 8) == 0.0);

    std::vector<double> tight_x = {lower};
    REQUIRE(semi_infinite_check(inst, tight_x, p, 32, 8) <= 1e-9);

    std::vector<double> hot_x = {lower + 0.05};
    double viol = semi_infinite_check(inst, hot_x, p, 32, 8);
    REQUIRE(std::abs(viol - 0.05) <= 1e-9);

    // agreement with the slack route
    Slack s = constraint_slack(inst, hot_x, p);
    REQUIRE(std::abs(viol - std::max(0.0, -s.min())) <= 1e-9);
}

TEST_CASE("closure convexity probe enumerates pairs, weights, and levels") {
    RCPInstance inst =
        build_instance(fixtures::tiny_table_config(27, 3, 3, RiskSpec::cvar(0.5)));
    std::vector<double> alphas = {0.0, 0.5, 1.0};
    std::vector<std::size_t> levels = {1, 2};
    std::vector<ProbeRow> rows = closure_convexity_probe(inst, 3, alphas, levels, 1234);

    REQUIRE(rows.size() == 3 * alphas.size() * levels.size());
    std::size_t at = 0;
    for (std::size_t pr = 0; pr < 3; ++pr) {
        for (double a : alphas) {
            for (std::size_t m : levels) {
                REQUIRE(rows[at].pair == pr);
                REQUIRE(rows[at].alpha == a);
                REQUIRE(rows[at].level == m);
                REQUIRE(rows[at].deficit >= 0.0);
                if (a == 0.0 || a == 1.0)
                    REQUIRE(rows[at].deficit == 0.0);
                ++at;
            }
        }
    }

    // seeded draws make the probe reproducible
    std::vector<ProbeRow> again = closure_convexity_probe(inst, 3, alphas, levels, 1234);
    for (std::size_t i = 0; i < rows.size(); ++i)
        REQUIRE(rows[i].deficit == again[i].deficit);
}

TEST_CASE("probe CSV format is pinned") {
    std::vector<ProbeRow> rows = {{0, 0.5, 2, 0.125}, {1, 0.0, 1, 0.0}};
    std::ostringstream os;
    write_probe_csv(os, rows);
    REQUIRE(os.str() == "pair,alpha,m,deficit\n0,0.5,2,0.125\n1,0,1,0\n");
}
