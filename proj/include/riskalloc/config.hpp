#pragma once

#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "riskalloc/instance.hpp"

namespace riskalloc {

using json = nlohmann::ordered_json;

namespace detail {

inline void require_keys(const json& j, const char* where,
                         std::initializer_list<const char*> allowed) {
    if (!j.is_object())
        throw SchemaError(std::string(where) + ": expected an object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : allowed)
            if (item.key() == k)
                ok = true;
        if (!ok)
            throw SchemaError(std::string(where) + ": unknown key '" + item.key() + "'");
    }
}

inline const json& require_field(const json& j, const char* where, const char* key) {
    auto it = j.find(key);
    if (it == j.end())
        throw SchemaError(std::string(where) + ": missing key '" + std::string(key) + "'");
    return *it;
}

inline double as_number(const json& j, const char* where) {
    if (!j.is_number())
        throw SchemaError(std::string(where) + ": expected a number");
    return j.get<double>();
}

inline std::size_t as_index(const json& j, const char* where) {
    if (!j.is_number_unsigned())
        throw SchemaError(std::string(where) + ": expected a nonnegative integer");
    return j.get<std::size_t>();
}

inline std::string as_string(const json& j, const char* where) {
    if (!j.is_string())
        throw SchemaError(std::string(where) + ": expected a string");
    return j.get<std::string>();
}

inline std::vector<double> as_vector(const json& j, const char* where) {
    if (!j.is_array())
        throw SchemaError(std::string(where) + ": expected an array of numbers");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& e : j)
        out.push_back(as_number(e, where));
    return out;
}

inline std::vector<std::vector<double>> as_matrix(const json& j, const char* where) {
    if (!j.is_array())
        throw SchemaError(std::string(where) + ": expected an array of rows");
    std::vector<std::vector<double>> out;
    out.reserve(j.size());
    for (const auto& e : j)
        out.push_back(as_vector(e, where));
    return out;
}

}  // namespace detail

inline RiskSpec risk_from_json(const json& j) {
    detail::require_keys(j, "risk", {"type", "beta", "lambda", "theta", "a", "b"});
    std::string type = detail::as_string(detail::require_field(j, "risk", "type"), "risk.type");
    if (type == "expectation") {
        detail::require_keys(j, "risk", {"type"});
        return RiskSpec::expectation();
    }
    if (type == "cvar")
        return RiskSpec::cvar(detail::as_number(detail::require_field(j, "risk", "beta"),
                                                "risk.beta"));
    if (type == "mad")
        return RiskSpec::mad(detail::as_number(detail::require_field(j, "risk", "lambda"),
                                               "risk.lambda"));
    if (type == "mean_cvar")
        return RiskSpec::mean_cvar(
            detail::as_number(detail::require_field(j, "risk", "theta"), "risk.theta"),
            detail::as_number(detail::require_field(j, "risk", "beta"), "risk.beta"));
    if (type == "box_mean")
        return RiskSpec::box_mean(
            detail::as_vector(detail::require_field(j, "risk", "a"), "risk.a"),
            detail::as_vector(detail::require_field(j, "risk", "b"), "risk.b"));
    throw SchemaError("risk.type: unknown type '" + type + "'");
}

inline json risk_to_json(const RiskSpec& r) {
    json j;
    j["type"] = std::string(risk_kind_name(r.kind()));
    switch (r.kind()) {
        case RiskKind::Expectation:
            break;
        case RiskKind::CVaR:
            j["beta"] = r.beta();
            break;
        case RiskKind::MAD:
            j["lambda"] = r.lambda();
            break;
        case RiskKind::MeanCVaR:
            j["theta"] = r.theta();
            j["beta"] = r.beta();
            break;
        case RiskKind::BoxMean:
            j["a"] = r.box_lo();
            j["b"] = r.box_hi();
            break;
    }
    return j;
}

inline ServiceSpec service_from_json(const json& j) {
    detail::require_keys(j, "service",
                         {"family", "users", "noise", "coupling", "threshold", "reward", "dim",
                          "points", "candidates", "values"});
    std::string fam =
        detail::as_string(detail::require_field(j, "service", "family"), "service.family");
    if (fam == "interference_rate") {
        detail::require_keys(j, "service", {"family", "users", "noise", "coupling"});
        return ServiceSpec::interference_rate(
            detail::as_index(detail::require_field(j, "service", "users"), "service.users"),
            detail::as_number(detail::require_field(j, "service", "noise"), "service.noise"),
            detail::as_number(detail::require_field(j, "service", "coupling"),
                              "service.coupling"));
    }
    if (fam == "awgn_rate") {
        detail::require_keys(j, "service", {"family", "users"});
        return ServiceSpec::awgn_rate(
            detail::as_index(detail::require_field(j, "service", "users"), "service.users"));
    }
    if (fam == "outage_indicator") {
        detail::require_keys(j, "service", {"family", "threshold", "reward"});
        return ServiceSpec::outage_indicator(
            detail::as_vector(detail::require_field(j, "service", "threshold"),
                              "service.threshold"),
            detail::as_vector(detail::require_field(j, "service", "reward"), "service.reward"));
    }
    if (fam == "table") {
        detail::require_keys(j, "service", {"family", "dim", "points", "candidates", "values"});
        auto points = detail::as_matrix(detail::require_field(j, "service", "points"),
                                        "service.points");
        auto cands = detail::as_matrix(detail::require_field(j, "service", "candidates"),
                                       "service.candidates");
        const json& vals = detail::require_field(j, "service", "values");
        if (!vals.is_array())
            throw SchemaError("service.values: expected an array");
        std::vector<std::vector<std::vector<double>>> values;
        for (const auto& per_service : vals)
            values.push_back(detail::as_matrix(per_service, "service.values"));
        return ServiceSpec::table(
            detail::as_index(detail::require_field(j, "service", "dim"), "service.dim"),
            std::move(points), std::move(cands), std::move(values));
    }
    throw SchemaError("service.family: unknown family '" + fam + "'");
}

inline json service_to_json(const ServiceSpec& s) {
    json j;
    j["family"] = std::string(service_family_name(s.family()));
    switch (s.family()) {
        case ServiceFamily::InterferenceRate:
            j["users"] = s.dim();
            j["noise"] = s.noise();
            j["coupling"] = s.coupling();
            break;
        case ServiceFamily::AwgnRate:
            j["users"] = s.dim();
            break;
        case ServiceFamily::OutageIndicator:
            j["threshold"] = s.threshold();
            j["reward"] = s.reward();
            break;
        case ServiceFamily::Table:
            j["dim"] = s.dim();
            j["points"] = s.table_points();
            j["candidates"] = s.table_candidates();
            j["values"] = s.table_values();
            break;
        case ServiceFamily::Callback:
            throw SchemaError("service: callback services cannot be serialized");
    }
    return j;
}

inline Utility utility_from_json(const json& j) {
    detail::require_keys(j, "utility", {"kind", "weights", "dim", "offset", "floor"});
    std::string kind =
        detail::as_string(detail::require_field(j, "utility", "kind"), "utility.kind");
    if (kind == "weighted_sum") {
        detail::require_keys(j, "utility", {"kind", "weights"});
        return Utility::weighted_sum(
            detail::as_vector(detail::require_field(j, "utility", "weights"),
                              "utility.weights"));
    }
    if (kind == "sum_log") {
        detail::require_keys(j, "utility", {"kind", "dim", "offset"});
        return Utility::sum_log(
            detail::as_index(detail::require_field(j, "utility", "dim"), "utility.dim"),
            detail::as_number(detail::require_field(j, "utility", "offset"), "utility.offset"));
    }
    if (kind == "min") {
        detail::require_keys(j, "utility", {"kind", "dim"});
        return Utility::min(
            detail::as_index(detail::require_field(j, "utility", "dim"), "utility.dim"));
    }
    if (kind == "affine_floor") {
        detail::require_keys(j, "utility", {"kind", "floor"});
        return Utility::affine_floor(
            detail::as_vector(detail::require_field(j, "utility", "floor"), "utility.floor"));
    }
    throw SchemaError("utility.kind: unknown kind '" + kind + "'");
}

inline json utility_to_json(const Utility& u) {
    json j;
    j["kind"] = std::string(utility_kind_name(u.kind()));
    switch (u.kind()) {
        case UtilityKind::WeightedSum:
            j["weights"] = u.coefficients();
            break;
        case UtilityKind::SumLog:
            j["dim"] = u.dim();
            j["offset"] = u.offset();
            break;
        case UtilityKind::Min:
            j["dim"] = u.dim();
            break;
        case UtilityKind::AffineFloor:
            j["floor"] = u.coefficients();
            break;
        case UtilityKind::Callback:
            throw SchemaError("utility: callback utilities cannot be serialized");
    }
    return j;
}

inline PolicyClass policy_class_from_json(const json& j) {
    detail::require_keys(j, "policy_class",
                         {"kind", "dim", "upper", "grid", "total", "slope"});
    std::string kind =
        detail::as_string(detail::require_field(j, "policy_class", "kind"), "policy_class.kind");
    if (kind == "uniform_box") {
        detail::require_keys(j, "policy_class", {"kind", "dim", "upper", "grid"});
        return PolicyClass::uniform_box(
            detail::as_index(detail::require_field(j, "policy_class", "dim"),
                             "policy_class.dim"),
            detail::as_number(detail::require_field(j, "policy_class", "upper"),
                              "policy_class.upper"),
            detail::as_index(detail::require_field(j, "policy_class", "grid"),
                             "policy_class.grid"));
    }
    if (kind == "rectangular_box") {
        detail::require_keys(j, "policy_class", {"kind", "upper", "grid"});
        return PolicyClass::rectangular_box(
            detail::as_vector(detail::require_field(j, "policy_class", "upper"),
                              "policy_class.upper"),
            detail::as_index(detail::require_field(j, "policy_class", "grid"),
                             "policy_class.grid"));
    }
    if (kind == "budget") {
        detail::require_keys(j, "policy_class", {"kind", "dim", "upper", "grid", "total",
                                                 "slope"});
        double slope = 0.0;
        if (auto it = j.find("slope"); it != j.end())
            slope = detail::as_number(*it, "policy_class.slope");
        return PolicyClass::budget(
            detail::as_index(detail::require_field(j, "policy_class", "dim"),
                             "policy_class.dim"),
            detail::as_number(detail::require_field(j, "policy_class", "upper"),
                              "policy_class.upper"),
            detail::as_index(detail::require_field(j, "policy_class", "grid"),
                             "policy_class.grid"),
            detail::as_number(detail::require_field(j, "policy_class", "total"),
                              "policy_class.total"),
            slope);
    }
    throw SchemaError("policy_class.kind: unknown kind '" + kind + "'");
}

inline json policy_class_to_json(const PolicyClass& pc) {
    json j;
    j["kind"] = std::string(policy_class_name(pc.kind()));
    switch (pc.kind()) {
        case PolicyClassKind::UniformBox:
            j["dim"] = pc.dim();
            j["upper"] = pc.upper()[0];
            j["grid"] = pc.grid();
            break;
        case PolicyClassKind::RectangularBox:
            j["upper"] = pc.upper();
            j["grid"] = pc.grid();
            break;
        case PolicyClassKind::Budget:
            j["dim"] = pc.dim();
            j["upper"] = pc.upper()[0];
            j["grid"] = pc.grid();
            j["total"] = pc.total_base();
            j["slope"] = pc.total_slope();
            break;
    }
    return j;
}

inline DualOptions dual_options_from_json(const json& j) {
    detail::require_keys(j, "dual",
                         {"max_iters", "eta0", "method", "seed", "refine_factor", "tol"});
    DualOptions d;
    if (auto it = j.find("max_iters"); it != j.end())
        d.max_iters = detail::as_index(*it, "dual.max_iters");
    if (auto it = j.find("eta0"); it != j.end())
        d.eta0 = detail::as_number(*it, "dual.eta0");
    if (auto it = j.find("method"); it != j.end()) {
        std::string m = detail::as_string(*it, "dual.method");
        if (m == "exhaustive")
            d.method = InnerMethod::Exhaustive;
        else if (m == "coordinate")
            d.method = InnerMethod::Coordinate;
        else if (m == "minimax")
            d.method = InnerMethod::Minimax;
        else
            throw SchemaError("dual.method: unknown method '" + m + "'");
    }
    if (auto it = j.find("seed"); it != j.end())
        d.seed = static_cast<std::uint64_t>(detail::as_index(*it, "dual.seed"));
    if (auto it = j.find("refine_factor"); it != j.end())
        d.refine_factor = detail::as_index(*it, "dual.refine_factor");
    if (auto it = j.find("tol"); it != j.end())
        d.tol = detail::as_number(*it, "dual.tol");
    return d;
}

inline json dual_options_to_json(const DualOptions& d) {
    json j;
    j["max_iters"] = d.max_iters;
    j["eta0"] = d.eta0;
    j["method"] = std::string(inner_method_name(d.method));
    if (d.seed)
        j["seed"] = *d.seed;
    j["refine_factor"] = d.refine_factor;
    j["tol"] = d.tol;
    return j;
}

/**
 * @brief Strict instance deserialization: every key must be known, every
 * referenced block well formed. Unknown keys raise SchemaError instead of
 * being ignored, so typos in configs fail loudly.
 */
inline InstanceConfig config_from_json(const json& j) {
    detail::require_keys(j, "config",
                         {"scenario", "service", "risks", "utility", "constraints", "x_box",
                          "policy_class", "slater_witness", "seed", "dual"});
    InstanceConfig cfg;

    const json& sc = detail::require_field(j, "config", "scenario");
    detail::require_keys(sc, "scenario", {"points", "weights", "file"});
    if (auto it = sc.find("file"); it != sc.end()) {
        ScenarioSet s = read_scenario_table(detail::as_string(*it, "scenario.file"));
        for (std::size_t k = 0; k < s.size(); ++k) {
            cfg.points.emplace_back(s.point(k).begin(), s.point(k).end());
            cfg.weights.push_back(s.weight(k));
        }
    } else {
        cfg.points = detail::as_matrix(detail::require_field(sc, "scenario", "points"),
                                       "scenario.points");
        cfg.weights = detail::as_vector(detail::require_field(sc, "scenario", "weights"),
                                        "scenario.weights");
    }

    cfg.service = service_from_json(detail::require_field(j, "config", "service"));

    const json& risks = detail::require_field(j, "config", "risks");
    if (!risks.is_array())
        throw SchemaError("config.risks: expected an array");
    for (const auto& r : risks)
        cfg.risks.push_back(risk_from_json(r));

    cfg.objective = utility_from_json(detail::require_field(j, "config", "utility"));

    if (auto it = j.find("constraints"); it != j.end()) {
        if (!it->is_array())
            throw SchemaError("config.constraints: expected an array");
        for (const auto& g : *it)
            cfg.constraints.push_back(utility_from_json(g));
    }

    const json& xb = detail::require_field(j, "config", "x_box");
    detail::require_keys(xb, "x_box", {"lo", "hi"});
    cfg.x_box.lo = detail::as_vector(detail::require_field(xb, "x_box", "lo"), "x_box.lo");
    cfg.x_box.hi = detail::as_vector(detail::require_field(xb, "x_box", "hi"), "x_box.hi");

    cfg.policy_class = policy_class_from_json(detail::require_field(j, "config", "policy_class"));

    if (auto it = j.find("slater_witness"); it != j.end()) {
        detail::require_keys(*it, "slater_witness", {"x", "policy"});
        cfg.witness_x = detail::as_vector(detail::require_field(*it, "slater_witness", "x"),
                                          "slater_witness.x");
        auto rows = detail::as_matrix(detail::require_field(*it, "slater_witness", "policy"),
                                      "slater_witness.policy");
        Policy p;
        p.dim = rows.empty() ? 0 : rows[0].size();
        for (const auto& r : rows) {
            if (r.size() != p.dim)
                throw SchemaError("slater_witness.policy: ragged rows");
            p.values.insert(p.values.end(), r.begin(), r.end());
        }
        cfg.witness_policy = std::move(p);
    }

    if (auto it = j.find("seed"); it != j.end())
        cfg.seed = static_cast<std::uint64_t>(detail::as_index(*it, "config.seed"));
    if (auto it = j.find("dual"); it != j.end())
        cfg.dual = dual_options_from_json(*it);
    return cfg;
}

inline json config_to_json(const InstanceConfig& cfg) {
    json j;
    j["scenario"] = json{{"points", cfg.points}, {"weights", cfg.weights}};
    if (!cfg.service)
        throw SchemaError("config: missing service");
    j["service"] = service_to_json(*cfg.service);
    j["risks"] = json::array();
    for (const auto& r : cfg.risks)
        j["risks"].push_back(risk_to_json(r));
    if (!cfg.objective)
        throw SchemaError("config: missing utility");
    j["utility"] = utility_to_json(*cfg.objective);
    if (!cfg.constraints.empty()) {
        j["constraints"] = json::array();
        for (const auto& g : cfg.constraints)
            j["constraints"].push_back(utility_to_json(g));
    }
    j["x_box"] = json{{"lo", cfg.x_box.lo}, {"hi", cfg.x_box.hi}};
    if (!cfg.policy_class)
        throw SchemaError("config: missing policy_class");
    j["policy_class"] = policy_class_to_json(*cfg.policy_class);
    if (cfg.witness_x && cfg.witness_policy) {
        std::vector<std::vector<double>> rows;
        for (std::size_t k = 0; k < cfg.witness_policy->rows(); ++k) {
            auto r = cfg.witness_policy->row(k);
            rows.emplace_back(r.begin(), r.end());
        }
        j["slater_witness"] = json{{"x", *cfg.witness_x}, {"policy", rows}};
    }
    j["seed"] = cfg.seed;
    j["dual"] = dual_options_to_json(cfg.dual);
    return j;
}

inline InstanceConfig read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw SchemaError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw SchemaError("invalid JSON in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace riskalloc
