#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "raretrack/flux.hpp"
#include "raretrack/sampling.hpp"
#include "raretrack/sources.hpp"

namespace raretrack {

class ScenarioError : public std::runtime_error {
public:
    explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

// One smooth piece of the initial condition, as written in the scenario file.
// kind: "constant" (value) | "linear" (v0, v1) | "expr" (expr in x) |
// "gaussian_cosine" (no parameters).
struct ScenarioPiece {
    std::string kind;
    double a = 0, b = 0;
    double value = 0;      // constant
    double v0 = 0, v1 = 0; // linear endpoints
    std::string expr;      // expr source text

    friend bool operator==(const ScenarioPiece&, const ScenarioPiece&) = default;
};

// Source term spec. id: "bottom_profile" (params x_lo/x_hi/amplitude) |
// "expr" (expr in x and u).
struct ScenarioSource {
    std::string id;
    std::map<std::string, double> params;
    std::string expr;

    friend bool operator==(const ScenarioSource&, const ScenarioSource&) = default;
};

// A fully described run: flux, initial condition, optional source, resolution,
// horizon, and output plan. Plain data; factories build the solver objects.
struct Scenario {
    int version = 1;
    std::string name;
    std::string flux_id;
    std::map<std::string, double> flux_params;
    std::vector<ScenarioPiece> pieces;
    std::optional<ScenarioSource> source;
    double x_lo = 0, x_hi = 0;
    std::optional<double> d_max; // exactly one of d_max / n
    std::optional<int> n;        // total particle count: d_max = width / n
    double d_min = 0;
    double t_end = 0;
    std::vector<double> output_times; // sorted, within [0, t_end]
    bool postprocess = false;
    int rk_substeps = 4;
    std::optional<double> dt_cap; // default (source runs): d_max / max(1, initial max |f'|)
    std::uint64_t seed = 0;

    friend bool operator==(const Scenario&, const Scenario&) = default;

    double width() const { return x_hi - x_lo; }

    double d_max_effective() const {
        if (d_max) return *d_max;
        return width() / static_cast<double>(*n);
    }

    FluxModel make_flux_model() const { return make_flux(flux_id, flux_params); }

    InitialCondition make_initial() const {
        InitialCondition ic(x_lo, x_hi);
        for (const auto& pc : pieces) {
            if (pc.kind == "constant")
                ic.add_constant(pc.a, pc.b, pc.value);
            else if (pc.kind == "linear")
                ic.add_linear(pc.a, pc.b, pc.v0, pc.v1);
            else if (pc.kind == "expr")
                ic.add_expr(pc.a, pc.b, pc.expr);
            else if (pc.kind == "gaussian_cosine")
                ic.add_gaussian_cosine(pc.a, pc.b);
            else
                throw ScenarioError("unknown piece kind '" + pc.kind + "'");
        }
        ic.check();
        return ic;
    }

    // Empty SourceModel when the scenario has no source block.
    SourceModel make_source_model() const {
        if (!source) return {};
        if (source->id == "bottom_profile") {
            auto get = [&](const std::string& key, double dflt) {
                auto it = source->params.find(key);
                return it == source->params.end() ? dflt : it->second;
            };
            return make_bottom_profile_source(get("x_lo", 4.5), get("x_hi", 5.5),
                                              get("amplitude", 1.0));
        }
        if (source->id == "expr") return make_expr_source(source->expr);
        throw ScenarioError("unknown source id '" + source->id + "'");
    }

    // Full validation: schema invariants plus constructibility of every component.
    // Throws ScenarioError with the first problem found.
    void validate() const {
        if (version != 1) throw ScenarioError("unsupported scenario version " +
                                              std::to_string(version));
        if (name.empty()) throw ScenarioError("scenario needs a non-empty name");
        if (!(x_lo < x_hi)) throw ScenarioError("domain requires x_lo < x_hi");
        if (d_max.has_value() == n.has_value())
            throw ScenarioError("give exactly one of d_max or n");
        if (d_max && !(*d_max > 0)) throw ScenarioError("d_max must be positive");
        if (n && *n < 2) throw ScenarioError("n must be at least 2");
        if (!(d_min >= 0)) throw ScenarioError("d_min must be non-negative");
        if (!(d_max_effective() > d_min))
            throw ScenarioError("resolution must satisfy d_max > d_min");
        if (!(t_end >= 0)) throw ScenarioError("t_end must be non-negative");
        if (output_times.empty()) throw ScenarioError("output_times must not be empty");
        for (std::size_t i = 0; i < output_times.size(); ++i) {
            const double t = output_times[i];
            if (!(t >= 0 && t <= t_end))
                throw ScenarioError("output time " + std::to_string(t) +
                                    " outside [0, t_end]");
            if (i > 0 && !(t > output_times[i - 1]))
                throw ScenarioError("output_times must be strictly increasing");
        }
        if (rk_substeps < 1) throw ScenarioError("rk_substeps must be at least 1");
        if (dt_cap && !(*dt_cap > 0)) throw ScenarioError("dt_cap must be positive");
        try {
            FluxModel flux = make_flux_model();
            InitialCondition ic = make_initial();
            // Sanity-evaluate the initial data on a coarse grid: catches values
            // outside a bounded flux domain and expression runtime errors early.
            for (int i = 0; i <= 64; ++i) {
                const double x = x_lo + width() * i / 64.0;
                for (double u : {i == 0 ? ic(x_lo) : ic.value_left(x), ic(x)})
                    if (!flux.in_domain(u))
                        throw ScenarioError("initial value " + std::to_string(u) +
                                            " at x=" + std::to_string(x) +
                                            " is outside the flux domain");
            }
            (void)make_source_model();
        } catch (const ScenarioError&) {
            throw;
        } catch (const std::exception& e) {
            throw ScenarioError(std::string("scenario component invalid: ") + e.what());
        }
    }
};

namespace detail {

using ordered_json = nlohmann::ordered_json;

inline void reject_unknown_keys(const ordered_json& j, const std::string& where,
                                std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ScenarioError("unknown key '" + it.key() + "' in " + where);
    }
}

template <class T>
T require(const ordered_json& j, const std::string& where, const char* key) {
    if (!j.contains(key))
        throw ScenarioError(where + " is missing required key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ScenarioError(where + " key '" + std::string(key) +
                            "' has the wrong type: " + e.what());
    }
}

template <class T>
T optional_or(const ordered_json& j, const std::string& where, const char* key, T dflt) {
    if (!j.contains(key)) return dflt;
    return require<T>(j, where, key);
}

inline std::map<std::string, double> params_map(const ordered_json& j,
                                                const std::string& where) {
    std::map<std::string, double> out;
    if (!j.is_object()) throw ScenarioError(where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.value().is_number())
            throw ScenarioError(where + " entry '" + it.key() + "' must be a number");
        out[it.key()] = it.value().get<double>();
    }
    return out;
}

} // namespace detail

// Parse a scenario from JSON text and validate it. Throws ScenarioError on any
// schema or component problem.
inline Scenario parse_scenario(const std::string& text) {
    using detail::ordered_json;
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ScenarioError("scenario root must be a JSON object");
    detail::reject_unknown_keys(j, "scenario",
                                {"version", "name", "flux", "initial", "source", "domain",
                                 "d_max", "n", "d_min", "t_end", "output_times",
                                 "postprocess", "rk_substeps", "dt_cap", "seed"});

    Scenario s;
    s.version = detail::require<int>(j, "scenario", "version");
    s.name = detail::require<std::string>(j, "scenario", "name");

    const ordered_json& jf = j.contains("flux") ? j.at("flux") : ordered_json();
    if (!jf.is_object()) throw ScenarioError("scenario needs a 'flux' object");
    detail::reject_unknown_keys(jf, "flux", {"id", "params"});
    s.flux_id = detail::require<std::string>(jf, "flux", "id");
    if (jf.contains("params")) s.flux_params = detail::params_map(jf.at("params"), "flux.params");

    const ordered_json& ji = j.contains("initial") ? j.at("initial") : ordered_json();
    if (!ji.is_object()) throw ScenarioError("scenario needs an 'initial' object");
    detail::reject_unknown_keys(ji, "initial", {"pieces"});
    if (!ji.contains("pieces") || !ji.at("pieces").is_array() || ji.at("pieces").empty())
        throw ScenarioError("initial.pieces must be a non-empty array");
    for (const auto& jp : ji.at("pieces")) {
        if (!jp.is_object()) throw ScenarioError("each initial piece must be an object");
        ScenarioPiece pc;
        pc.kind = detail::require<std::string>(jp, "piece", "kind");
        pc.a = detail::require<double>(jp, "piece", "a");
        pc.b = detail::require<double>(jp, "piece", "b");
        if (pc.kind == "constant") {
            detail::reject_unknown_keys(jp, "piece", {"kind", "a", "b", "value"});
            pc.value = detail::require<double>(jp, "piece", "value");
        } else if (pc.kind == "linear") {
            detail::reject_unknown_keys(jp, "piece", {"kind", "a", "b", "v0", "v1"});
            pc.v0 = detail::require<double>(jp, "piece", "v0");
            pc.v1 = detail::require<double>(jp, "piece", "v1");
        } else if (pc.kind == "expr") {
            detail::reject_unknown_keys(jp, "piece", {"kind", "a", "b", "expr"});
            pc.expr = detail::require<std::string>(jp, "piece", "expr");
        } else if (pc.kind == "gaussian_cosine") {
            detail::reject_unknown_keys(jp, "piece", {"kind", "a", "b"});
        } else {
            throw ScenarioError("unknown piece kind '" + pc.kind + "'");
        }
        s.pieces.push_back(std::move(pc));
    }

    if (j.contains("source")) {
        const ordered_json& js = j.at("source");
        if (!js.is_object()) throw ScenarioError("'source' must be an object");
        detail::reject_unknown_keys(js, "source", {"id", "params", "expr"});
        ScenarioSource src;
        src.id = detail::require<std::string>(js, "source", "id");
        if (js.contains("params")) src.params = detail::params_map(js.at("params"), "source.params");
        if (js.contains("expr")) src.expr = detail::require<std::string>(js, "source", "expr");
        if (src.id == "expr" && src.expr.empty())
            throw ScenarioError("source id 'expr' needs an 'expr' string");
        s.source = std::move(src);
    }

    if (!j.contains("domain") || !j.at("domain").is_array() || j.at("domain").size() != 2 ||
        !j.at("domain")[0].is_number() || !j.at("domain")[1].is_number())
        throw ScenarioError("'domain' must be an array [x_lo, x_hi]");
    s.x_lo = j.at("domain")[0].get<double>();
    s.x_hi = j.at("domain")[1].get<double>();

    if (j.contains("d_max")) s.d_max = detail::require<double>(j, "scenario", "d_max");
    if (j.contains("n")) s.n = detail::require<int>(j, "scenario", "n");
    s.d_min = detail::optional_or<double>(j, "scenario", "d_min", 0.0);
    s.t_end = detail::require<double>(j, "scenario", "t_end");
    if (j.contains("output_times")) {
        if (!j.at("output_times").is_array())
            throw ScenarioError("'output_times' must be an array of numbers");
        for (const auto& t : j.at("output_times")) {
            if (!t.is_number()) throw ScenarioError("'output_times' must contain numbers");
            s.output_times.push_back(t.get<double>());
        }
    } else {
        s.output_times = {s.t_end};
    }
    s.postprocess = detail::optional_or<bool>(j, "scenario", "postprocess", false);
    s.rk_substeps = detail::optional_or<int>(j, "scenario", "rk_substeps", 4);
    if (j.contains("dt_cap")) s.dt_cap = detail::require<double>(j, "scenario", "dt_cap");
    if (j.contains("seed")) {
        // get<uint64_t> would wrap a negative literal silently; insist on the
        // parser having seen a non-negative integer.
        if (!j.at("seed").is_number_unsigned())
            throw ScenarioError("scenario key 'seed' must be a non-negative integer");
        s.seed = j.at("seed").get<std::uint64_t>();
    }

    s.validate();
    return s;
}

// Canonical serialization: fixed key order, absent optionals omitted, 2-space
// indentation, trailing newline. parse(serialize(s)) reproduces s exactly.
inline std::string serialize_scenario(const Scenario& s) {
    using detail::ordered_json;
    ordered_json j;
    j["version"] = s.version;
    j["name"] = s.name;
    j["flux"]["id"] = s.flux_id;
    if (!s.flux_params.empty()) j["flux"]["params"] = s.flux_params;
    ordered_json pieces = ordered_json::array();
    for (const auto& pc : s.pieces) {
        ordered_json jp;
        jp["kind"] = pc.kind;
        jp["a"] = pc.a;
        jp["b"] = pc.b;
        if (pc.kind == "constant") jp["value"] = pc.value;
        if (pc.kind == "linear") {
            jp["v0"] = pc.v0;
            jp["v1"] = pc.v1;
        }
        if (pc.kind == "expr") jp["expr"] = pc.expr;
        pieces.push_back(std::move(jp));
    }
    j["initial"]["pieces"] = std::move(pieces);
    if (s.source) {
        j["source"]["id"] = s.source->id;
        if (!s.source->params.empty()) j["source"]["params"] = s.source->params;
        if (!s.source->expr.empty()) j["source"]["expr"] = s.source->expr;
    }
    j["domain"] = {s.x_lo, s.x_hi};
    if (s.d_max) j["d_max"] = *s.d_max;
    if (s.n) j["n"] = *s.n;
    if (s.d_min != 0) j["d_min"] = s.d_min;
    j["t_end"] = s.t_end;
    j["output_times"] = s.output_times;
    if (s.postprocess) j["postprocess"] = true;
    if (s.rk_substeps != 4) j["rk_substeps"] = s.rk_substeps;
    if (s.dt_cap) j["dt_cap"] = *s.dt_cap;
    if (s.seed != 0) j["seed"] = s.seed;
    return j.dump(2) + "\n";
}

inline Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

} // namespace raretrack
