#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "raretrack/scenario.hpp"

using namespace raretrack;
using Catch::Approx;

namespace {

// A complete, valid scenario exercising every optional block.
const char* kFull = R"json({
  "version": 1,
  "name": "full-demo",
  "flux": {"id": "buckley_leverett", "params": {"m": 2.0}},
  "initial": {"pieces": [
    {"kind": "constant", "a": 0.0, "b": 1.0, "value": 1.0},
    {"kind": "linear", "a": 1.0, "b": 1.5, "v0": 1.0, "v1": 0.25},
    {"kind": "expr", "a": 1.5, "b": 2.0, "expr": "0.25"},
    {"kind": "constant", "a": 2.0, "b": 2.5, "value": 0.3}
  ]},
  "domain": [0.0, 2.5],
  "d_max": 0.05,
  "d_min": 0.001,
  "t_end": 0.4,
  "output_times": [0.1, 0.2, 0.4],
  "postprocess": true,
  "rk_substeps": 2,
  "dt_cap": 0.01,
  "seed": 7
})json";

const char* kMinimal = R"json({
  "version": 1,
  "name": "mini",
  "flux": {"id": "burgers"},
  "initial": {"pieces": [{"kind": "constant", "a": 0.0, "b": 1.0, "value": 1.0}]},
  "domain": [0.0, 1.0],
  "n": 40,
  "t_end": 0.5
})json";

// Copy of `s` with one occurrence of `needle` replaced by `patch` (crude but
// keeps each failure case below to one line).
std::string patched_in(std::string s, const std::string& needle, const std::string& patch) {
    auto pos = s.find(needle);
    REQUIRE(pos != std::string::npos);
    s.replace(pos, needle.size(), patch);
    return s;
}

std::string patched(const std::string& needle, const std::string& patch) {
    return patched_in(kMinimal, needle, patch);
}

} // namespace

TEST_CASE("scenario parse reads every field") {
    Scenario s = parse_scenario(kFull);
    REQUIRE(s.version == 1);
    REQUIRE(s.name == "full-demo");
    REQUIRE(s.flux_id == "buckley_leverett");
    REQUIRE(s.flux_params.at("m") == Approx(2.0));
    REQUIRE(s.pieces.size() == 4);
    REQUIRE(s.pieces[0].kind == "constant");
    REQUIRE(s.pieces[0].value == 1.0);
    REQUIRE(s.pieces[1].kind == "linear");
    REQUIRE(s.pieces[1].v0 == 1.0);
    REQUIRE(s.pieces[1].v1 == 0.25);
    REQUIRE(s.pieces[2].expr == "0.25");
    REQUIRE(!s.source.has_value());
    REQUIRE(s.x_lo == 0.0);
    REQUIRE(s.x_hi == 2.5);
    REQUIRE(s.d_max == 0.05);
    REQUIRE(!s.n.has_value());
    REQUIRE(s.d_min == 0.001);
    REQUIRE(s.t_end == 0.4);
    REQUIRE(s.output_times == std::vector<double>{0.1, 0.2, 0.4});
    REQUIRE(s.postprocess);
    REQUIRE(s.rk_substeps == 2);
    REQUIRE(s.dt_cap == 0.01);
    REQUIRE(s.seed == 7);
}

TEST_CASE("scenario defaults fill in for omitted optionals") {
    Scenario s = parse_scenario(kMinimal);
    REQUIRE(s.flux_params.empty());
    REQUIRE(!s.d_max.has_value());
    REQUIRE(s.n == 40);
    REQUIRE(s.d_max_effective() == Approx(1.0 / 40));
    REQUIRE(s.d_min == 0.0);
    REQUIRE(s.output_times == std::vector<double>{0.5}); // defaults to {t_end}
    REQUIRE(!s.postprocess);
    REQUIRE(s.rk_substeps == 4);
    REQUIRE(!s.dt_cap.has_value());
    REQUIRE(s.seed == 0);
}

TEST_CASE("scenario round-trip is the identity") {
    for (const char* text : {kFull, kMinimal}) {
        Scenario s = parse_scenario(text);
        const std::string once = serialize_scenario(s);
        Scenario s2 = parse_scenario(once);
        REQUIRE(s2 == s);
        REQUIRE(serialize_scenario(s2) == once); // canonical form is a fixed point
    }
}

TEST_CASE("scenario with a source block round-trips") {
    std::string text = patched("\"flux\": {\"id\": \"burgers\"},",
                               "\"flux\": {\"id\": \"burgers\"},\n"
                               "\"source\": {\"id\": \"bottom_profile\","
                               " \"params\": {\"x_lo\": -0.5, \"x_hi\": 0.5,"
                               " \"amplitude\": 0.5}},");
    Scenario s = parse_scenario(text);
    REQUIRE(s.source.has_value());
    REQUIRE(s.source->id == "bottom_profile");
    REQUIRE(s.source->params.at("amplitude") == 0.5);
    SourceModel m = s.make_source_model();
    REQUIRE(m.has_bottom());
    REQUIRE(parse_scenario(serialize_scenario(s)) == s);

    std::string etext = patched("\"flux\": {\"id\": \"burgers\"},",
                                "\"flux\": {\"id\": \"burgers\"},\n"
                                "\"source\": {\"id\": \"expr\", \"expr\": \"-0.1*u\"},");
    Scenario se = parse_scenario(etext);
    REQUIRE(se.make_source_model().g(0.0, 2.0) == Approx(-0.2));
    REQUIRE(parse_scenario(serialize_scenario(se)) == se);
}

TEST_CASE("scenario factories build working solver components") {
    Scenario s = parse_scenario(kFull);
    FluxModel flux = s.make_flux_model();
    REQUIRE(flux.id() == "buckley_leverett");
    InitialCondition ic = s.make_initial();
    REQUIRE(ic(0.5) == Approx(1.0));
    REQUIRE(ic(1.25) == Approx(0.625));
    REQUIRE(ic(2.25) == Approx(0.3));
    REQUIRE(s.make_source_model().empty());
}

TEST_CASE("scenario validation rejects schema violations") {
    auto bad = [](const std::string& text) {
        REQUIRE_THROWS_AS(parse_scenario(text), ScenarioError);
    };
    bad("not json");
    bad("[1,2,3]");
    bad(patched("\"version\": 1", "\"version\": 3"));
    bad(patched("\"name\": \"mini\"", "\"name\": \"\""));
    bad(patched("\"name\": \"mini\"", "\"name\": \"mini\", \"bogus\": 1"));
    bad(patched("{\"id\": \"burgers\"}", "{\"id\": \"burgers\", \"extra\": {}}"));
    bad(patched("{\"id\": \"burgers\"}", "{}"));                     // missing flux id
    bad(patched("{\"id\": \"burgers\"}", "{\"id\": \"frobnicate\"}")); // unknown flux
    bad(patched("\"domain\": [0.0, 1.0]", "\"domain\": [1.0, 0.0]"));
    bad(patched("\"domain\": [0.0, 1.0]", "\"domain\": [0.0]"));
    bad(patched("\"n\": 40", "\"n\": 1"));
    bad(patched("\"n\": 40", "\"d_max\": -0.1"));
    bad(patched("\"n\": 40", "\"n\": 40, \"d_max\": 0.1")); // both resolutions
    bad(patched("\"n\": 40", "\"d_min\": 0.0"));            // neither resolution
    bad(patched("\"n\": 40", "\"n\": 40, \"d_min\": 0.5")); // d_max <= d_min
    bad(patched("\"t_end\": 0.5", "\"t_end\": -1.0"));
    bad(patched("\"t_end\": 0.5", "\"t_end\": 0.5, \"output_times\": [0.4, 0.2]"));
    bad(patched("\"t_end\": 0.5", "\"t_end\": 0.5, \"output_times\": [0.2, 0.7]"));
    bad(patched("\"t_end\": 0.5", "\"t_end\": 0.5, \"output_times\": []"));
    bad(patched("\"t_end\": 0.5", "\"t_end\": 0.5, \"rk_substeps\": 0"));
    bad(patched("\"t_end\": 0.5", "\"t_end\": 0.5, \"dt_cap\": 0.0"));
    bad(patched("\"t_end\": 0.5", "\"t_end\": 0.5, \"seed\": -1"));
    // piece problems: unknown kind, wrong params for kind, gap in tiling
    bad(patched("{\"kind\": \"constant\", \"a\": 0.0, \"b\": 1.0, \"value\": 1.0}",
                "{\"kind\": \"step\", \"a\": 0.0, \"b\": 1.0, \"value\": 1.0}"));
    bad(patched("{\"kind\": \"constant\", \"a\": 0.0, \"b\": 1.0, \"value\": 1.0}",
                "{\"kind\": \"constant\", \"a\": 0.0, \"b\": 1.0, \"v0\": 1.0}"));
    bad(patched("{\"kind\": \"constant\", \"a\": 0.0, \"b\": 1.0, \"value\": 1.0}",
                "{\"kind\": \"constant\", \"a\": 0.0, \"b\": 0.4, \"value\": 1.0},"
                "{\"kind\": \"constant\", \"a\": 0.6, \"b\": 1.0, \"value\": 1.0}"));
    // initial data outside a bounded flux domain (Buckley-Leverett lives on [0,1])
    bad(patched_in(patched("{\"id\": \"burgers\"}", "{\"id\": \"buckley_leverett\"}"),
                   "\"value\": 1.0", "\"value\": 2.0"));
    // malformed expression text
    bad(patched("{\"kind\": \"constant\", \"a\": 0.0, \"b\": 1.0, \"value\": 1.0}",
                "{\"kind\": \"expr\", \"a\": 0.0, \"b\": 1.0, \"expr\": \"1.0 +\"}"));
    // source problems
    bad(patched("\"flux\": {\"id\": \"burgers\"},",
                "\"flux\": {\"id\": \"burgers\"},"
                "\"source\": {\"id\": \"mystery\"},"));
    bad(patched("\"flux\": {\"id\": \"burgers\"},",
                "\"flux\": {\"id\": \"burgers\"},"
                "\"source\": {\"id\": \"expr\"},"));
}

TEST_CASE("scenario file loading") {
    const std::string path = "scenario_roundtrip_test.json";
    {
        std::ofstream out(path, std::ios::binary);
        out << kFull;
    }
    Scenario s = load_scenario_file(path);
    REQUIRE(s.name == "full-demo");
    std::remove(path.c_str());
    REQUIRE_THROWS_AS(load_scenario_file("no/such/file.json"), ScenarioError);
}
