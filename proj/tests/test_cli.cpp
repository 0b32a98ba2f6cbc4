#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "riskalloc/riskalloc.hpp"

using namespace riskalloc;

namespace {

namespace fs = std::filesystem;

const char* kCli = RISKALLOC_CLI_PATH;
const char* kConfigDir = RISKALLOC_CONFIG_DIR;

fs::path scratch_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() /
                     ("riskalloc_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

fs::path scratch_file(const std::string& name) { return scratch_dir() / name; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

RunResult run_cli(const std::string& cli_args, const std::string& env_prefix = "") {
    static int counter = 0;
    fs::path out = scratch_file("stdout_" + std::to_string(counter) + ".txt");
    fs::path err = scratch_file("stderr_" + std::to_string(counter) + ".txt");
    ++counter;
    std::string cmd = env_prefix + std::string(kCli) + " " + cli_args + " > " + out.string() +
                      " 2> " + err.string();
    int rc = std::system(cmd.c_str());
    RunResult r;
    if (rc != -1 && WIFEXITED(rc))
        r.exit_code = WEXITSTATUS(rc);
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

fs::path write_config(const std::string& name, const json& j) {
    fs::path p = scratch_file(name);
    std::ofstream out(p, std::ios::binary);
    out << j.dump(2) << "\n";
    return p;
}

std::string first_line(const std::string& text) {
    return text.substr(0, text.find('\n'));
}

}  // namespace

TEST_CASE("configs survive a serialization round trip") {
    std::vector<InstanceConfig> cfgs;
    cfgs.push_back(fixtures::toy_config());
    cfgs.push_back(fixtures::tiny_table_config(3, 3, 3, RiskSpec::cvar(0.6)));
    cfgs.push_back(generate_instance("interference2", 2, 11));
    cfgs.push_back(generate_instance("interference3", 2, 11));
    cfgs.push_back(generate_instance("outage", 3, 11));
    cfgs.push_back(generate_instance("concave-awgn", 2, 11));
    cfgs.push_back(generate_instance("random-table", 3, 11));
    for (const InstanceConfig& cfg : cfgs) {
        json j = config_to_json(cfg);
        InstanceConfig back = config_from_json(j);
        REQUIRE(config_to_json(back) == j);
        // both sides build to instances with identical scenario data
        RCPInstance a = build_instance(cfg);
        RCPInstance b = build_instance(back);
        REQUIRE(a.atoms() == b.atoms());
        REQUIRE(std::equal(a.scenarios().weights().begin(), a.scenarios().weights().end(),
                           b.scenarios().weights().begin(), b.scenarios().weights().end()));
        REQUIRE(a.n_services() == b.n_services());
    }
}

TEST_CASE("config parsing fails loudly on schema violations") {
    json good = config_to_json(fixtures::toy_config());
    REQUIRE_NOTHROW(config_from_json(good));

    json typo = good;
    typo["seeed"] = 1;
    REQUIRE_THROWS_AS(config_from_json(typo), SchemaError);

    json missing_beta = good;
    missing_beta["risks"][0] = {{"type", "cvar"}};
    REQUIRE_THROWS_AS(config_from_json(missing_beta), SchemaError);

    json stray_param = good;
    stray_param["risks"][0] = {{"type", "expectation"}, {"beta", 0.5}};
    REQUIRE_THROWS_AS(config_from_json(stray_param), SchemaError);

    json bad_family = good;
    bad_family["service"]["family"] = "teleport";
    REQUIRE_THROWS_AS(config_from_json(bad_family), SchemaError);

    json bad_method = good;
    bad_method["dual"]["method"] = "newton";
    REQUIRE_THROWS_AS(config_from_json(bad_method), SchemaError);

    json no_points = good;
    no_points["scenario"].erase("points");
    REQUIRE_THROWS_AS(config_from_json(no_points), SchemaError);

    json ragged = good;
    ragged["slater_witness"]["policy"] =
        json::array({json::array({0.1, 0.2}), json::array({0.3})});
    REQUIRE_THROWS_AS(config_from_json(ragged), SchemaError);

    REQUIRE_THROWS_AS(read_config_file("/nonexistent/config.json"), SchemaError);
    fs::path garbled = scratch_file("garbled.json");
    {
        std::ofstream out(garbled);
        out << "{ not json";
    }
    REQUIRE_THROWS_AS(read_config_file(garbled.string()), SchemaError);
}

TEST_CASE("scenario tables load from files referenced by configs") {
    fs::path table = scratch_file("scen.txt");
    {
        std::ofstream out(table);
        out << "# weight then coordinates\n";
        out << "0.25 0.5\n";
        out << "\n";
        out << "0.75 1.5\n";
    }
    json j = config_to_json(fixtures::tiny_table_config(5, 2, 3, RiskSpec::expectation()));
    j["scenario"] = json{{"file", table.string()}};
    // the table service still refers to the fixture's own points, so snapping
    // must find the file's points among the table rows; rebuild the service
    // for the file's points instead
    InstanceConfig cfg = config_from_json(j);
    REQUIRE(cfg.points == std::vector<std::vector<double>>{{0.5}, {1.5}});
    REQUIRE(cfg.weights == std::vector<double>{0.25, 0.75});
}

TEST_CASE("cli help and argument errors") {
    REQUIRE(run_cli("--help").exit_code == 0);
    REQUIRE(run_cli("").exit_code == 2);
    REQUIRE(run_cli("warp-speed").exit_code == 2);
    REQUIRE(run_cli("solve").exit_code == 2);  // --config is required
    RunResult missing = run_cli("solve --config /nonexistent/config.json");
    REQUIRE(missing.exit_code == 2);
    REQUIRE(missing.err.find("config error") != std::string::npos);
}

TEST_CASE("cli solve closes the toy problem") {
    std::string cfg = std::string(kConfigDir) + "/toy.json";
    fs::path out = scratch_file("toy_solve.json");
    RunResult r = run_cli("solve --config " + cfg + " --out " + out.string());
    REQUIRE(r.exit_code == 0);

    json rep = json::parse(slurp(out));
    REQUIRE(std::abs(rep["dual"]["value"].get<double>() - 1.0) <= 1e-9);
    REQUIRE(rep["primal"]["value"].get<double>() >= 1.0 - 1e-9);
    REQUIRE(std::abs(rep["gap_abs"].get<double>()) <= 1e-9);
    REQUIRE(rep["dual"]["exact_inner"].get<bool>());
    REQUIRE(rep["dual"]["method"].get<std::string>() == "exhaustive");
    REQUIRE(rep["recovered"]["min_slack"].get<double>() >= -1e-9);
}

TEST_CASE("cli solve writes the dual trace in the pinned format") {
    std::string cfg = std::string(kConfigDir) + "/toy.json";
    fs::path out = scratch_file("trace_solve.json");
    fs::path trace = scratch_file("trace.csv");
    RunResult r = run_cli("solve --config " + cfg + " --max-iters 25 --out " + out.string() +
                          " --trace " + trace.string());
    REQUIRE(r.exit_code == 0);

    std::istringstream is(slurp(trace));
    std::string line;
    REQUIRE(std::getline(is, line));
    // the toy instance has no utility constraint rows and one service
    REQUIRE(line == "iter,D,lambda_rho_0,slack_rho_0");
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        REQUIRE(line.find(',') != std::string::npos);
        REQUIRE(line.substr(0, line.find(',')) == std::to_string(rows));
        ++rows;
    }
    REQUIRE(rows == 25);
}

TEST_CASE("cli gap study emits the pinned csv and ignores thread count") {
    json cfg_json = config_to_json(fixtures::tiny_table_config(13, 3, 3, RiskSpec::cvar(0.6)));
    cfg_json["dual"]["max_iters"] = 40;
    fs::path cfg = write_config("gap_cfg.json", cfg_json);

    fs::path a = scratch_file("gap_a.csv");
    fs::path b = scratch_file("gap_b.csv");
    RunResult ra = run_cli("gap-study --config " + cfg.string() + " --levels 1,2,4 --out " +
                               a.string(),
                           "RISKALLOC_THREADS=1 ");
    RunResult rb = run_cli("gap-study --config " + cfg.string() + " --levels 1,2,4 --out " +
                               b.string(),
                           "RISKALLOC_THREADS=4 ");
    REQUIRE(ra.exit_code == 0);
    REQUIRE(rb.exit_code == 0);

    std::string csv_a = slurp(a);
    REQUIRE(csv_a == slurp(b));
    REQUIRE(first_line(csv_a) == "m,K,primal,dual,gap_abs,gap_rel,method,seed,runtime_ms");
    std::size_t lines = std::count(csv_a.begin(), csv_a.end(), '\n');
    REQUIRE(lines == 4);  // header + one row per level

    REQUIRE(run_cli("gap-study --config " + cfg.string() + " --levels 0").exit_code == 2);
    REQUIRE(run_cli("gap-study --config " + cfg.string() + " --levels 4,2").exit_code == 2);
}

TEST_CASE("cli mix demo emits the pinned csv with exact endpoints") {
    json cfg_json = config_to_json(fixtures::tiny_table_config(21, 3, 3, RiskSpec::cvar(0.5)));
    fs::path cfg = write_config("mix_cfg.json", cfg_json);
    fs::path out = scratch_file("mix.csv");
    RunResult r = run_cli("mix-demo --config " + cfg.string() +
                          " --alphas 0,0.5,1 --levels 1,2 --out " + out.string());
    REQUIRE(r.exit_code == 0);

    std::istringstream is(slurp(out));
    std::string line;
    REQUIRE(std::getline(is, line));
    REQUIRE(line == "alpha,m,epsilon,subset_size");
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        std::istringstream fields(line);
        std::string alpha, m, eps, subset;
        REQUIRE(std::getline(fields, alpha, ','));
        REQUIRE(std::getline(fields, m, ','));
        REQUIRE(std::getline(fields, eps, ','));
        REQUIRE(std::getline(fields, subset, ','));
        if (alpha == "0" || alpha == "1")
            REQUIRE(eps == "0");
        if (alpha == "0")
            REQUIRE(subset == "0");
        ++rows;
    }
    REQUIRE(rows == 6);
}

TEST_CASE("cli risk eval reports envelope values") {
    json req;
    req["scenario"] = {{"points", {{0.0}, {1.0}, {2.0}, {3.0}}},
                       {"weights", {0.25, 0.25, 0.25, 0.25}}};
    req["risks"] = json::array({json{{"type", "cvar"}, {"beta", 0.5}},
                                json{{"type", "expectation"}}});
    req["values"] = json::array({json::array({1.0, 2.0, 3.0, 4.0})});
    fs::path cfg = write_config("risk_eval.json", req);
    fs::path out = scratch_file("risk_eval_out.json");
    RunResult r = run_cli("risk-eval --config " + cfg.string() + " --out " + out.string());
    REQUIRE(r.exit_code == 0);

    json rep = json::parse(slurp(out));
    REQUIRE(rep.is_array());
    REQUIRE(rep.size() == 2);
    REQUIRE(rep[0]["type"] == "cvar");
    REQUIRE(rep[0]["upper"].get<double>() == 3.5);
    REQUIRE(rep[0]["lower"].get<double>() == 1.5);
    REQUIRE(rep[0]["envelope_gamma"].get<double>() == 2.0);
    REQUIRE(rep[0]["worst_case_density"].size() == 4);
    REQUIRE(rep[1]["type"] == "expectation");
    REQUIRE(rep[1]["upper"].get<double>() == 2.5);
    REQUIRE(rep[1]["lower"].get<double>() == 2.5);

    json bad = req;
    bad["risks"][0].erase("beta");
    fs::path bad_cfg = write_config("risk_eval_bad.json", bad);
    REQUIRE(run_cli("risk-eval --config " + bad_cfg.string()).exit_code == 2);
}

TEST_CASE("cli rejects invalid and infeasible configs with distinct codes") {
    json heavy = config_to_json(fixtures::toy_config());
    heavy["scenario"]["weights"] = {0.6, 0.6};
    heavy["scenario"]["points"] = {{1.0}, {2.0}};
    fs::path heavy_cfg = write_config("heavy.json", heavy);
    RunResult r1 = run_cli("solve --config " + heavy_cfg.string());
    REQUIRE(r1.exit_code == 2);

    // service values top out near 2; requiring x >= 3 leaves no interior
    json hopeless = config_to_json(fixtures::tiny_table_config(5, 2, 3, RiskSpec::expectation()));
    hopeless["x_box"]["lo"] = {3.0};
    hopeless["x_box"]["hi"] = {3.5};
    hopeless.erase("slater_witness");
    fs::path hopeless_cfg = write_config("hopeless.json", hopeless);
    RunResult r2 = run_cli("solve --config " + hopeless_cfg.string());
    REQUIRE(r2.exit_code == 4);
    REQUIRE(r2.err.find("infeasible") != std::string::npos);
}

TEST_CASE("cli generate emits configs that solve end to end") {
    fs::path gen = scratch_file("generated.json");
    RunResult g = run_cli("generate --family random-table --scenarios 3 --seed 5 --out " +
                          gen.string());
    REQUIRE(g.exit_code == 0);

    fs::path out = scratch_file("generated_solve.json");
    RunResult s = run_cli("solve --config " + gen.string() + " --max-iters 40 --out " +
                          out.string());
    REQUIRE(s.exit_code == 0);
    json rep = json::parse(slurp(out));
    double dual = rep["dual"]["value"].get<double>();
    double primal = rep["primal"]["value"].get<double>();
    REQUIRE(dual >= primal - 1e-9);

    REQUIRE(run_cli("generate --family warp --scenarios 2").exit_code == 2);
}

TEST_CASE("cli solve output is byte-identical across runs") {
    std::string cfg = std::string(kConfigDir) + "/toy.json";
    fs::path a = scratch_file("det_a.json");
    fs::path b = scratch_file("det_b.json");
    REQUIRE(run_cli("solve --config " + cfg + " --out " + a.string()).exit_code == 0);
    REQUIRE(run_cli("solve --config " + cfg + " --out " + b.string()).exit_code == 0);
    std::string ja = slurp(a);
    REQUIRE(!ja.empty());
    REQUIRE(ja == slurp(b));
}
