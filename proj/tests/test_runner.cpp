#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "raretrack/runner.hpp"

using namespace raretrack;
using Catch::Approx;

namespace {

// Jump 1 -> 0 at x=0, with enough room that the left state's particles (speed
// 1) have not all crashed into the shock (speed 1/2) by t_end.
Scenario burgers_shock_scenario() {
    Scenario s;
    s.name = "burgers-shock";
    s.flux_id = "burgers";
    s.pieces = {{"constant", -4.0, 0.0, 1.0, 0, 0, ""}, {"constant", 0.0, 4.0, 0.0, 0, 0, ""}};
    s.x_lo = -4.0;
    s.x_hi = 4.0;
    s.n = 80;
    s.t_end = 2.0;
    s.output_times = {0.0, 1.0, 2.0};
    s.postprocess = true;
    return s;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

TEST_CASE("format_double is shortest round-trip") {
    REQUIRE(format_double(0.1) == "0.1");
    REQUIRE(format_double(1.0) == "1");
    REQUIRE(format_double(-2.5e-07) == "-2.5e-07");
    const double third = 1.0 / 3.0;
    REQUIRE(std::stod(format_double(third)) == third);
}

TEST_CASE("run_scenario advances through output times and conserves area") {
    Scenario s = burgers_shock_scenario();
    s.validate();
    RunResult r = run_scenario(s);
    REQUIRE(r.slices.size() == 3);
    REQUIRE(r.slices[0].t == 0.0);
    REQUIRE(r.slices[2].t == 2.0);
    REQUIRE(r.stats.t_end == Approx(2.0));
    // initial area: u=1 on [-4,0] -> 4.0
    REQUIRE(r.stats.area_begin == Approx(4.0).margin(1e-12));
    REQUIRE(std::abs(r.stats.conservation_residual()) < 1e-9);
    // the shock sits at x = t/2; the sharpened output pins it exactly
    REQUIRE(r.slices[2].sharp.has_value());
    const Polyline sharp = evaluate(*r.slices[2].sharp, 8);
    const Polyline exact = analytic_reference("burgers_shock", 2.0, -4.0, 4.0);
    REQUIRE(l1_union(sharp, exact) < 1e-10);
    // diagnostics rows carry particle counts and entropy values
    REQUIRE(r.slices[2].diag.particles == r.slices[2].front.size());
    REQUIRE(r.entropy_levels.size() == 9);
    REQUIRE(r.slices[0].diag.entropy.size() == 9);
}

TEST_CASE("run_scenario at t_end=0 reproduces the initial condition") {
    // Smooth data: settling is a no-op, so the raw t=0 front IS the sample.
    Scenario s;
    s.name = "smooth";
    s.flux_id = "quartic";
    s.pieces = {{"gaussian_cosine", -3.0, 3.0, 0, 0, 0, ""}};
    s.x_lo = -3.0;
    s.x_hi = 3.0;
    s.n = 60;
    s.t_end = 0.0;
    s.output_times = {0.0};
    RunResult r = run_scenario(s);
    REQUIRE(r.slices.size() == 1);
    FluxModel flux = s.make_flux_model();
    InitialCondition ic = s.make_initial();
    ParticleFront fresh = sample(flux, ic, s.d_max_effective(), s.d_min);
    REQUIRE(l1_union(evaluate(r.slices[0].front, 8), evaluate(fresh, 8)) < 1e-12);

    // Jump data: the settle pass collapses the sampled shock stack into one
    // particle (the method's working representation, first-order in d_max);
    // sharpening puts the exact discontinuity back.
    Scenario sj = burgers_shock_scenario();
    sj.t_end = 0.0;
    sj.output_times = {0.0};
    RunResult rj = run_scenario(sj);
    const Polyline sharp0 = evaluate(*rj.slices[0].sharp, 8);
    REQUIRE(l1_union(sharp0, analytic_reference("burgers_shock", 0.0, -4.0, 4.0)) < 1e-12);
}

TEST_CASE("run artifacts are written and byte-identical across reruns") {
    namespace fs = std::filesystem;
    Scenario s = burgers_shock_scenario();
    const fs::path dir1 = fs::temp_directory_path() / "rt_runner_a";
    const fs::path dir2 = fs::temp_directory_path() / "rt_runner_b";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    write_run_artifacts(run_scenario(s), dir1.string());
    write_run_artifacts(run_scenario(s), dir2.string());

    const char* leaves[] = {"raw_000.csv", "raw_001.csv", "raw_002.csv",
                            "sharp_000.csv", "sharp_001.csv", "sharp_002.csv",
                            "diagnostics.csv"};
    for (const char* leaf : leaves) {
        REQUIRE(fs::exists(dir1 / leaf));
        REQUIRE(slurp(dir1 / leaf) == slurp(dir2 / leaf));
    }
    // CSV header shape
    const std::string raw = slurp(dir1 / "raw_000.csv");
    REQUIRE(raw.rfind("x,u,segment_id,is_jump\n", 0) == 0);
    REQUIRE(fs::exists(dir1 / "summary.json"));
    const std::string summary = slurp(dir1 / "summary.json");
    REQUIRE(summary.find("\"conservation_residual\"") != std::string::npos);
    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("analytic references match hand values") {
    // fan at t=1: u = x on [0,1]; integral over [-1,2] = 0.5 + 1 = 1.5
    const Polyline fan = analytic_reference("burgers_fan", 1.0, -1.0, 2.0);
    Polyline zero;
    zero.pts = {{-1.0, 0.0, 0, false}, {2.0, 0.0, 0, false}};
    REQUIRE(l1_union(fan, zero) == Approx(1.5).margin(1e-12));
    // shock at t=2 jumps at x=1
    const Polyline sh = analytic_reference("burgers_shock", 2.0, -1.0, 3.0);
    REQUIRE(l1_union(sh, zero) == Approx(2.0).margin(1e-12)); // u=1 on [-1,1]
    // Riemann initial data at t=0
    const Polyline bl0 = analytic_reference("bl_riemann", 0.0, -1.0, 1.0);
    REQUIRE(l1_union(bl0, zero) == Approx(1.0).margin(1e-12));
    // MOC case at t=0 is the initial profile
    const Polyline moc = analytic_reference("quartic_preshock_moc", 0.0, -3.0, 3.0);
    double worst = 0;
    for (const auto& p : moc.pts)
        worst = std::max(worst,
                         std::abs(p.u - std::exp(-p.x * p.x) *
                                            std::cos(3.14159265358979323846 * p.x)));
    REQUIRE(worst < 1e-12);
    REQUIRE_THROWS_AS(analytic_reference("no_such_case", 1.0, 0.0, 1.0), ExactError);
}

TEST_CASE("kruzkov entropy of a polyline") {
    Polyline ramp;
    ramp.pts = {{0.0, 0.0, 0, false}, {1.0, 1.0, 0, false}};
    REQUIRE(kruzkov_entropy(ramp, 0.5) == Approx(0.25));
    REQUIRE(kruzkov_entropy(ramp, 0.0) == Approx(0.5));
    REQUIRE(kruzkov_entropy(ramp, -1.0) == Approx(1.5)); // area - k*width
}

TEST_CASE("convergence study on the shock scenario sees first order raw, second sharpened") {
    Scenario s = burgers_shock_scenario();
    s.postprocess = false;
    ConvergeTable t = converge_study(s, {40, 80, 160}, "burgers_shock");
    REQUIRE(t.rows.size() == 3);
    REQUIRE(t.reference == "burgers_shock");
    // errors decrease with resolution
    REQUIRE(t.rows[2].err_raw < t.rows[0].err_raw);
    // the raw front carries the shock as a particle: O(d) L1 error
    REQUIRE(t.order_raw > 0.8);
    // sharpened fronts place the jump exactly for this piecewise-constant case
    REQUIRE(t.rows[2].err_sharp < 1e-10);
    REQUIRE_THROWS_AS(converge_study(s, {40, 80}, "burgers_shock"), ScenarioError);
}

TEST_CASE("comparison study plateaus at the particle error and is deterministic") {
    Scenario s = burgers_shock_scenario();
    CompareTable a = compare_study(s, {50, 100, 200});
    CompareTable b = compare_study(s, {50, 100, 200});
    REQUIRE(a.rows.size() == 3);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        REQUIRE(a.rows[i].cells == b.rows[i].cells);
        REQUIRE(a.rows[i].err == b.rows[i].err); // bitwise: same inputs, same path
    }
    // oracle refinement shrinks the distance toward the particle floor
    REQUIRE(a.rows[2].err <= a.rows[0].err);
    REQUIRE(a.plateau == a.rows[2].err);
    // sharpened particle solution is exact here, so the plateau tracks the
    // oracle's own smearing and keeps shrinking
    REQUIRE(a.plateau < a.rows[0].err);
}

TEST_CASE("study tables serialize with orders and plateau appended") {
    namespace fs = std::filesystem;
    Scenario s = burgers_shock_scenario();
    ConvergeTable ct = converge_study(s, {20, 40, 80}, "burgers_shock");
    CompareTable pt = compare_study(s, {50, 100});
    const fs::path dir = fs::temp_directory_path() / "rt_runner_tables";
    fs::create_directories(dir);
    write_converge_csv((dir / "c.csv").string(), ct);
    write_converge_json((dir / "c.json").string(), ct);
    write_compare_csv((dir / "p.csv").string(), pt);
    write_compare_json((dir / "p.json").string(), pt);
    const std::string csv = slurp(dir / "c.csv");
    REQUIRE(csv.rfind("n,d_max,err_raw,err_sharp\n", 0) == 0);
    REQUIRE(csv.find("\norder,,") != std::string::npos);
    const std::string pcsv = slurp(dir / "p.csv");
    REQUIRE(pcsv.find("plateau,") != std::string::npos);
    const std::string cjson = slurp(dir / "c.json");
    REQUIRE(cjson.find("\"order_sharp\"") != std::string::npos);
    fs::remove_all(dir);
}
