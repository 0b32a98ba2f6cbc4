// Command line front end: solve one instance, sweep refinement levels,
// evaluate risk functionals, demo mixture closure, or emit benchmark
// configs. Exit codes: 0 ok, 2 configuration error, 3 solver error,
// 4 infeasible or unverifiable strict interior.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "riskalloc/riskalloc.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitInfeasible = 4;

std::vector<std::size_t> parse_levels(const std::string& raw) {
    std::vector<std::size_t> out;
    std::stringstream ss(raw);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty())
            continue;
        std::size_t pos = 0;
        unsigned long v = std::stoul(tok, &pos);
        if (pos != tok.size() || v == 0)
            throw riskalloc::SchemaError("--levels: expected positive integers, got '" + tok +
                                         "'");
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty())
        throw riskalloc::SchemaError("--levels: no levels given");
    return out;
}

std::vector<double> parse_alphas(const std::string& raw) {
    std::vector<double> out;
    std::stringstream ss(raw);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty())
            continue;
        std::size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size() || v < 0.0 || v > 1.0)
            throw riskalloc::SchemaError("--alphas: expected numbers in [0, 1], got '" + tok +
                                         "'");
        out.push_back(v);
    }
    if (out.empty())
        throw riskalloc::SchemaError("--alphas: no values given");
    return out;
}

void write_text(const std::optional<std::string>& path, const std::string& text) {
    if (!path) {
        std::cout << text;
        return;
    }
    std::ofstream out(*path, std::ios::binary);
    if (!out)
        throw riskalloc::SchemaError("cannot open output file: " + *path);
    out << text;
}

riskalloc::InnerMethod parse_method(const std::string& m) {
    if (m == "exhaustive")
        return riskalloc::InnerMethod::Exhaustive;
    if (m == "coordinate")
        return riskalloc::InnerMethod::Coordinate;
    if (m == "minimax")
        return riskalloc::InnerMethod::Minimax;
    throw riskalloc::SchemaError("--method: unknown method '" + m + "'");
}

struct CommonArgs {
    std::string config_path;
    std::optional<std::string> out_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> method;
    std::optional<std::size_t> max_iters;
};

void apply_overrides(riskalloc::InstanceConfig& cfg, const CommonArgs& args) {
    if (args.seed) {
        cfg.seed = *args.seed;
        cfg.dual.seed = *args.seed;
    }
    if (args.method)
        cfg.dual.method = parse_method(*args.method);
    if (args.max_iters)
        cfg.dual.max_iters = *args.max_iters;
}

riskalloc::json policy_rows_json(const riskalloc::Policy& p) {
    riskalloc::json rows = riskalloc::json::array();
    for (std::size_t k = 0; k < p.rows(); ++k) {
        auto r = p.row(k);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return rows;
}

int cmd_solve(const CommonArgs& args, std::size_t refine_factor,
              const std::optional<std::string>& trace_path, bool timings) {
    auto t0 = std::chrono::steady_clock::now();
    riskalloc::InstanceConfig cfg = riskalloc::read_config_file(args.config_path);
    apply_overrides(cfg, args);
    riskalloc::RCPInstance inst = riskalloc::build_instance(cfg);

    riskalloc::DualResult res = riskalloc::solve_dual(inst, cfg.dual);
    riskalloc::PrimalCandidate cand = riskalloc::recover_primal(inst, res, refine_factor);

    double feas_tol = cfg.dual.tol;
    double best_primal = -std::numeric_limits<double>::infinity();
    std::string source = "none";
    const riskalloc::TracePoint* best_tp = nullptr;
    if (cand.min_slack >= -feas_tol) {
        best_primal = cand.value;
        source = "recovered";
    }
    for (const auto& tp : res.trace) {
        auto fv = riskalloc::feasible_value(inst, tp.x, res.policies[tp.policy_id], feas_tol);
        if (fv && *fv > best_primal) {
            best_primal = *fv;
            source = "trace";
            best_tp = &tp;
        }
    }
    if (auto fv = riskalloc::feasible_value(inst, inst.witness().x, inst.witness().policy,
                                            feas_tol);
        fv && *fv > best_primal) {
        best_primal = *fv;
        source = "witness";
    }

    riskalloc::json out;
    out["dual"] = {
        {"value", res.best_dual},
        {"iterations", res.trace.size()},
        {"best_iter", res.best_iter},
        {"exact_inner", res.exact_inner},
        {"method", std::string(riskalloc::inner_method_name(res.method))},
        {"multipliers",
         {{"util", res.best_multipliers.util}, {"risk", res.best_multipliers.risk}}},
    };
    out["recovered"] = {
        {"value", cand.value},         {"x", cand.x},
        {"min_slack", cand.min_slack}, {"refine_factor", cand.refine_factor},
        {"mix_weights", cand.mix_weights}, {"policy", policy_rows_json(cand.policy)},
    };
    out["primal"] = {{"value", best_primal}, {"source", source}};
    if (source == "trace" && best_tp != nullptr)
        out["primal"]["x"] = best_tp->x;
    out["gap_abs"] = res.best_dual - best_primal;
    out["gap_rel"] =
        (res.best_dual - best_primal) / std::max(std::abs(best_primal), 1e-9);
    if (timings) {
        auto t1 = std::chrono::steady_clock::now();
        out["runtime_ms"] =
            std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
    }
    write_text(args.out_path, out.dump(2) + "\n");

    if (trace_path) {
        std::ofstream tr(*trace_path, std::ios::binary);
        if (!tr)
            throw riskalloc::SchemaError("cannot open trace file: " + *trace_path);
        tr << "iter,D";
        for (std::size_t c = 0; c < inst.n_constraint_rows(); ++c)
            tr << ",lambda_g_" << c;
        for (std::size_t i = 0; i < inst.n_services(); ++i)
            tr << ",lambda_rho_" << i;
        for (std::size_t c = 0; c < inst.n_constraint_rows(); ++c)
            tr << ",slack_g_" << c;
        for (std::size_t i = 0; i < inst.n_services(); ++i)
            tr << ",slack_rho_" << i;
        tr << "\n";
        char buf[40];
        auto put = [&](double v) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            tr << buf;
        };
        for (const auto& tp : res.trace) {
            tr << tp.iter;
            std::snprintf(buf, sizeof buf, ",%.17g", tp.dual);
            tr << buf;
            for (double v : tp.lambda.util)
                put(v);
            for (double v : tp.lambda.risk)
                put(v);
            for (double v : tp.slack.util)
                put(v);
            for (double v : tp.slack.risk)
                put(v);
            tr << "\n";
        }
    }
    return kExitOk;
}

int cmd_gap_study(const CommonArgs& args, const std::string& levels_raw, bool timings) {
    riskalloc::InstanceConfig cfg = riskalloc::read_config_file(args.config_path);
    apply_overrides(cfg, args);
    riskalloc::RCPInstance inst = riskalloc::build_instance(cfg);

    riskalloc::GapStudyOptions opts;
    opts.dual = cfg.dual;
    opts.feas_tol = cfg.dual.tol;
    opts.threads = riskalloc::thread_cap_from_env();
    std::vector<std::size_t> levels = parse_levels(levels_raw);

    riskalloc::GapReport rep = riskalloc::gap_study(inst, levels, opts);
    std::ostringstream csv;
    riskalloc::write_gap_csv(csv, rep, timings);
    write_text(args.out_path, csv.str());
    return kExitOk;
}

int cmd_risk_eval(const CommonArgs& args) {
    std::ifstream in(args.config_path);
    if (!in)
        throw riskalloc::SchemaError("cannot open config file: " + args.config_path);
    riskalloc::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw riskalloc::SchemaError(std::string("invalid JSON: ") + e.what());
    }
    riskalloc::detail::require_keys(j, "risk-eval", {"scenario", "risks", "values"});
    const riskalloc::json& sc = riskalloc::detail::require_field(j, "risk-eval", "scenario");
    riskalloc::detail::require_keys(sc, "scenario", {"points", "weights"});
    auto points = riskalloc::detail::as_matrix(
        riskalloc::detail::require_field(sc, "scenario", "points"), "scenario.points");
    auto weights = riskalloc::detail::as_vector(
        riskalloc::detail::require_field(sc, "scenario", "weights"), "scenario.weights");
    riskalloc::ScenarioSet set = riskalloc::make_scenario_set(points, weights);

    const riskalloc::json& risks_j = riskalloc::detail::require_field(j, "risk-eval", "risks");
    if (!risks_j.is_array() || risks_j.empty())
        throw riskalloc::SchemaError("risk-eval.risks: expected a nonempty array");
    std::vector<riskalloc::RiskSpec> risks;
    for (const auto& r : risks_j)
        risks.push_back(riskalloc::risk_from_json(r));

    auto values = riskalloc::detail::as_matrix(
        riskalloc::detail::require_field(j, "risk-eval", "values"), "risk-eval.values");
    if (values.size() != risks.size() && values.size() != 1)
        throw riskalloc::SchemaError("risk-eval.values: need one row per risk, or one shared row");

    riskalloc::json out = riskalloc::json::array();
    for (std::size_t i = 0; i < risks.size(); ++i) {
        const auto& z = values.size() == 1 ? values[0] : values[i];
        riskalloc::json entry = riskalloc::risk_to_json(risks[i]);
        entry["upper"] = riskalloc::upper_evaluate(risks[i], set, z);
        entry["lower"] = riskalloc::lower_evaluate(risks[i], set, z);
        entry["envelope_gamma"] = risks[i].envelope_gamma();
        entry["worst_case_density"] = riskalloc::worst_case_density(
            risks[i], set, z, riskalloc::Direction::Inf);
        out.push_back(entry);
    }
    write_text(args.out_path, out.dump(2) + "\n");
    return kExitOk;
}

int cmd_mix_demo(const CommonArgs& args, const std::string& levels_raw,
                 const std::string& alphas_raw) {
    riskalloc::InstanceConfig cfg = riskalloc::read_config_file(args.config_path);
    apply_overrides(cfg, args);
    riskalloc::RCPInstance inst = riskalloc::build_instance(cfg);

    std::vector<std::size_t> levels = parse_levels(levels_raw);
    std::vector<double> alphas = parse_alphas(alphas_raw);

    std::uint64_t seed = args.seed.value_or(cfg.seed);
    riskalloc::SplitMix64 rng_p(riskalloc::derive_seed(seed, 0x31D0));
    riskalloc::SplitMix64 rng_q(riskalloc::derive_seed(seed, 0x31D1));
    riskalloc::Policy p = riskalloc::detail::random_admissible_policy(inst, rng_p);
    riskalloc::Policy q = riskalloc::detail::random_admissible_policy(inst, rng_q);

    std::ostringstream csv;
    csv << "alpha,m,epsilon,subset_size\n";
    char buf[96];
    for (double alpha : alphas) {
        for (std::size_t m : levels) {
            riskalloc::MixResult mix = riskalloc::mix_policies(inst, p, q, alpha, m);
            std::snprintf(buf, sizeof buf, "%.17g,%zu,%.17g,%zu\n", alpha, m, mix.epsilon,
                          mix.subset.size());
            csv << buf;
        }
    }
    write_text(args.out_path, csv.str());
    return kExitOk;
}

int cmd_generate(const std::string& family, std::size_t scenarios, std::uint64_t seed,
                 const std::optional<std::string>& out_path) {
    riskalloc::InstanceConfig cfg = riskalloc::generate_instance(family, scenarios, seed);
    riskalloc::build_instance(cfg);  // reject configs that do not verify
    riskalloc::json j = riskalloc::config_to_json(cfg);
    write_text(out_path, j.dump(2) + "\n");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"risk-constrained resource allocation: dual bounds, primal recovery, "
                 "and mixture certificates"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string levels = "1,2,4,8";
    std::string alphas = "0.25,0.5,0.75";
    std::size_t refine_factor = 8;
    bool timings = false;
    std::optional<std::string> trace_path;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* opt = sub->add_option("--config", args.config_path, "instance config (JSON)");
        if (needs_config)
            opt->required();
        sub->add_option("--out", args.out_path, "output file (default: stdout)");
        sub->add_option("--seed", args.seed, "override the instance seed");
        sub->add_option("--method", args.method,
                        "inner maximization: exhaustive, coordinate, minimax");
        sub->add_option("--max-iters", args.max_iters, "dual iteration count");
    };

    CLI::App* solve = app.add_subcommand("solve", "dual solve plus primal recovery");
    add_common(solve, true);
    solve->add_option("--refine", refine_factor, "refinement factor for mixture recovery");
    solve->add_option("--trace", trace_path, "write the dual trace CSV here");
    solve->add_flag("--timings", timings, "include wall-clock time in the report");

    CLI::App* gap = app.add_subcommand("gap-study", "duality gap versus refinement level");
    add_common(gap, true);
    gap->add_option("--levels", levels, "comma separated refinement factors");
    gap->add_flag("--timings", timings, "write measured runtimes instead of zeros");

    CLI::App* risk = app.add_subcommand("risk-eval", "evaluate risk functionals on a sample");
    add_common(risk, true);

    CLI::App* mix = app.add_subcommand("mix-demo", "mixture deficit decay under refinement");
    add_common(mix, true);
    mix->add_option("--levels", levels, "comma separated refinement factors");
    mix->add_option("--alphas", alphas, "comma separated mixing weights in [0, 1]");

    CLI::App* gen = app.add_subcommand("generate", "emit a benchmark instance config");
    std::string family = "interference2";
    std::size_t scenarios = 2;
    std::uint64_t gen_seed = 1;
    gen->add_option("--family", family, "interference2, interference3, outage, concave-awgn, "
                                        "random-table")
        ->required();
    gen->add_option("--scenarios", scenarios, "number of scenario atoms")->required();
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", args.out_path, "output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (solve->parsed())
            return cmd_solve(args, refine_factor, trace_path, timings);
        if (gap->parsed())
            return cmd_gap_study(args, levels, timings);
        if (risk->parsed())
            return cmd_risk_eval(args);
        if (mix->parsed())
            return cmd_mix_demo(args, levels, alphas);
        if (gen->parsed())
            return cmd_generate(family, scenarios, gen_seed, args.out_path);
        std::cerr << "error: no subcommand\n";
        return kExitConfig;
    } catch (const riskalloc::SlaterNotVerified& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const riskalloc::InfeasibleEnvelope& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const riskalloc::SchemaError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const riskalloc::LengthMismatch& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const riskalloc::NonPositiveWeight& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const riskalloc::WeightSumOutOfRange& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const riskalloc::NonconcaveUtility& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const riskalloc::DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const riskalloc::Error& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kExitSolver;
    }
}
