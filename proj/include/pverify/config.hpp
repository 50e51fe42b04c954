#pragma once

// Run configuration, report and partition documents (all JSON).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pverify/envmodel.hpp"
#include "pverify/errors.hpp"
#include "pverify/geometry.hpp"
#include "pverify/imdp.hpp"

namespace pverify {

struct RunConfig {
    std::string environment;
    nlohmann::json constants = nlohmann::json::object();
    std::string network;  // as written in the config
    std::string template_kind = "rect";
    std::vector<Vector> directions;  // custom templates only
    std::size_t horizon = 1;
    double phi = 0.1;
    std::optional<double> p_safe;
    bool containment = true;
    bool conservative = false;
    std::uint64_t seed = 0;
    std::size_t leaf_budget = 4096;
    std::size_t state_budget = 100000;
    std::size_t node_budget = 10000;
    std::size_t samples = 1000;
    std::optional<Vector> initial_lower, initial_upper;

    std::filesystem::path base_dir;  // directory the config was read from

    std::filesystem::path network_path() const {
        const std::filesystem::path p(network);
        return p.is_absolute() ? p : base_dir / p;
    }
};

namespace detail {

template <typename T>
T config_field(const nlohmann::json& doc, const char* key, T fallback) {
    if (!doc.contains(key) || doc.at(key).is_null()) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("field '") + key + "' has the wrong type");
    }
}

}  // namespace detail

/// Parses and validates a config document. Does not touch the filesystem.
inline RunConfig parse_config(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    static const std::vector<std::string> known{"environment", "network", "template", "horizon", "phi",
                                                "p_safe", "containment", "conservative", "seed", "budgets",
                                                "samples", "initial"};
    for (const auto& [key, _] : doc.items())
        if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown field '" + key + "'");

    RunConfig c;
    const auto& env = doc.value("environment", nlohmann::json());
    if (env.is_string()) {
        c.environment = env.get<std::string>();
    } else if (env.is_object() && env.contains("name")) {
        c.environment = env.at("name").get<std::string>();
        c.constants = env.value("constants", nlohmann::json::object());
    } else {
        throw ConfigError("missing environment");
    }
    c.network = detail::config_field<std::string>(doc, "network", "");
    if (c.network.empty()) throw ConfigError("missing network path");

    if (doc.contains("template")) {
        const auto& t = doc.at("template");
        if (t.is_string()) {
            c.template_kind = t.get<std::string>();
        } else if (t.is_object()) {
            c.template_kind = detail::config_field<std::string>(t, "kind", "rect");
            c.directions = detail::config_field<std::vector<Vector>>(t, "directions", {});
        } else {
            throw ConfigError("template must be a string or an object");
        }
    }
    if (c.template_kind != "rect" && c.template_kind != "oct" && c.template_kind != "custom")
        throw ConfigError("template kind must be rect, oct or custom");
    if (c.template_kind == "custom" && c.directions.empty()) throw ConfigError("custom template needs directions");

    const long long k = detail::config_field<long long>(doc, "horizon", 1);
    if (k < 1) throw ConfigError("horizon must be at least 1");
    c.horizon = static_cast<std::size_t>(k);
    c.phi = detail::config_field<double>(doc, "phi", 0.1);
    if (!(c.phi > 0.0 && c.phi <= 1.0)) throw ConfigError("phi must be in (0,1]");
    if (doc.contains("p_safe") && !doc.at("p_safe").is_null()) {
        c.p_safe = detail::config_field<double>(doc, "p_safe", 0.0);
        if (!(*c.p_safe >= 0.0 && *c.p_safe <= 1.0)) throw ConfigError("p_safe must be in [0,1]");
    }
    c.containment = detail::config_field<bool>(doc, "containment", true);
    c.conservative = detail::config_field<bool>(doc, "conservative", false);
    c.seed = detail::config_field<std::uint64_t>(doc, "seed", 0);
    const auto budgets = doc.value("budgets", nlohmann::json::object());
    if (!budgets.is_object()) throw ConfigError("budgets must be an object");
    c.leaf_budget = detail::config_field<std::size_t>(budgets, "leaves", c.leaf_budget);
    c.state_budget = detail::config_field<std::size_t>(budgets, "states", c.state_budget);
    c.node_budget = detail::config_field<std::size_t>(budgets, "nodes", c.node_budget);
    if (c.leaf_budget == 0 || c.state_budget == 0 || c.node_budget == 0) throw ConfigError("budgets must be positive");
    c.samples = detail::config_field<std::size_t>(doc, "samples", c.samples);
    if (c.samples < 2) throw ConfigError("samples must be at least 2");
    if (doc.contains("initial")) {
        const auto& init = doc.at("initial");
        c.initial_lower = detail::config_field<Vector>(init, "lower", {});
        c.initial_upper = detail::config_field<Vector>(init, "upper", {});
        if (c.initial_lower->size() != c.initial_upper->size() || c.initial_lower->empty())
            throw ConfigError("initial region needs lower and upper of equal length");
    }
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    RunConfig c = parse_config(doc);
    c.base_dir = path.parent_path();
    return c;
}

/// The config with every default made explicit; echoed into the report.
inline nlohmann::json resolved_config(const RunConfig& c, const Environment& env) {
    nlohmann::json t{{"kind", c.template_kind}};
    if (c.template_kind == "custom") t["directions"] = c.directions;
    nlohmann::json doc{{"environment", {{"name", c.environment}, {"constants", env.constants()}}},
                       {"network", c.network},
                       {"template", t},
                       {"horizon", c.horizon},
                       {"phi", c.phi},
                       {"p_safe", c.p_safe ? nlohmann::json(*c.p_safe) : nlohmann::json()},
                       {"containment", c.containment},
                       {"conservative", c.conservative},
                       {"seed", c.seed},
                       {"budgets", {{"leaves", c.leaf_budget}, {"states", c.state_budget}, {"nodes", c.node_budget}}},
                       {"samples", c.samples},
                       {"initial", {{"lower", c.initial_lower.value_or(env.initial_lower())},
                                    {"upper", c.initial_upper.value_or(env.initial_upper())}}}};
    return doc;
}

inline TemplatePtr make_template(const RunConfig& c, std::size_t dim) {
    if (c.template_kind == "rect") return Template::rect(dim);
    if (c.template_kind == "oct") return Template::octagon(dim);
    for (const auto& d : c.directions)
        if (d.size() != dim) throw ConfigError("custom direction dimension differs from environment");
    return Template::custom(c.directions);
}

inline EnvironmentPtr make_environment(const RunConfig& c) { return make_environment(c.environment, c.constants); }

inline Polyhedron initial_region(const RunConfig& c, const Environment& env, const TemplatePtr& t) {
    if (!c.initial_lower) return env.initial_polyhedron(t);
    if (c.initial_lower->size() != env.dimension()) throw ConfigError("initial region dimension differs from environment");
    for (std::size_t i = 0; i < env.dimension(); ++i)
        if ((*c.initial_lower)[i] > (*c.initial_upper)[i]) throw ConfigError("initial lower exceeds upper");
    return Polyhedron::box(t, *c.initial_lower, *c.initial_upper);
}

inline VerifyOptions verify_options(const RunConfig& c, std::size_t threads) {
    VerifyOptions o;
    o.build.horizon = c.horizon;
    o.build.containment = c.containment;
    o.build.max_states = c.state_budget;
    o.build.threads = threads;
    o.build.refine.phi = c.phi;
    o.build.refine.samples = c.samples;
    o.build.refine.leaf_budget = c.leaf_budget;
    o.build.refine.seed = c.seed;
    o.build.refine.bounds.node_budget = c.node_budget;
    o.conservative = c.conservative;
    o.p_safe = c.p_safe;
    return o;
}

inline nlohmann::json report_to_json(const VerifyReport& r, const nlohmann::json& config) {
    nlohmann::json bounds = nlohmann::json::array();
    for (const auto& b : r.bounds)
        bounds.push_back({{"initial_state_id", b.initial_state_id}, {"maxmax", b.maxmax}, {"maxmin", b.maxmin}});
    nlohmann::json doc{{"config", config},
                       {"bounds", bounds},
                       {"global_maxmax", r.global_maxmax},
                       {"global_maxmin", r.global_maxmin},
                       {"maxmin_note", "maxmin guides refinement and is not necessarily a lower bound"},
                       {"stats",
                        {{"polyhedra", r.stats.polyhedra},
                         {"containment_merges", r.stats.containment_merges},
                         {"dedup_hits", r.stats.dedup_hits},
                         {"imdp_states", r.imdp_states},
                         {"transitions", r.stats.transitions},
                         {"milp_calls", r.stats.milp_calls},
                         {"clamped_lowers", r.stats.clamped_lowers},
                         {"wall_clock_s", r.wall_clock_s}}},
                       {"flags", r.flags}};
    if (r.pass) doc["pass"] = *r.pass;
    return doc;
}

/// Structural check of a report document; throws SchemaError on mismatch.
inline void validate_report(const nlohmann::json& doc) {
    auto need = [&](const nlohmann::json& obj, const char* key, auto pred, const char* what) {
        if (!obj.is_object() || !obj.contains(key) || !pred(obj.at(key)))
            throw SchemaError(std::string("report field '") + key + "' must be " + what);
    };
    auto is_count = [](const nlohmann::json& v) { return v.is_number_integer() && v.get<long long>() >= 0; };
    auto is_prob = [](const nlohmann::json& v) { return v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0; };
    need(doc, "config", [](const auto& v) { return v.is_object(); }, "an object");
    need(doc, "bounds", [](const auto& v) { return v.is_array(); }, "an array");
    for (const auto& b : doc.at("bounds")) {
        need(b, "initial_state_id", is_count, "an id");
        need(b, "maxmax", is_prob, "a probability");
        need(b, "maxmin", is_prob, "a probability");
        if (b.at("maxmin").get<double>() > b.at("maxmax").get<double>()) throw SchemaError("maxmin exceeds maxmax");
    }
    need(doc, "global_maxmax", is_prob, "a probability");
    need(doc, "stats", [](const auto& v) { return v.is_object(); }, "an object");
    for (const char* key : {"polyhedra", "containment_merges", "imdp_states"})
        need(doc.at("stats"), key, is_count, "a count");
    need(doc.at("stats"), "wall_clock_s", [](const auto& v) { return v.is_number(); }, "a number");
    need(doc, "flags", [](const auto& v) { return v.is_array(); }, "an array");
}

/// Partition document: refinement leaves of every expanded state at or below
/// `max_depth`, with their action probability intervals.
inline nlohmann::json partition_to_json(const Imdp& m, const Environment& env, std::size_t max_depth = 0) {
    nlohmann::json leaves = nlohmann::json::array();
    TemplatePtr t;
    for (const auto& s : m.states) {
        if (s.depth > max_depth || !s.expanded) continue;
        t = s.polyhedron.tmpl();
        for (const auto& leaf : s.pieces) {
            nlohmann::json iv = nlohmann::json::array();
            for (const auto& x : leaf.abstraction.intervals) iv.push_back({x.lower, x.upper});
            leaves.push_back({{"state", s.id}, {"depth", s.depth}, {"bounds", leaf.piece.bounds()}, {"intervals", iv}});
        }
    }
    nlohmann::json doc{{"dimension", env.dimension()}, {"actions", env.action_names()}, {"leaves", leaves}};
    if (t) doc["directions"] = t->directions();
    return doc;
}

}  // namespace pverify
