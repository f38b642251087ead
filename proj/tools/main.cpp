// Command-line driver: run scenarios, convergence studies, and oracle
// comparisons from JSON scenario files, emitting CSV/JSON artifacts.
//
// Exit codes: 0 success, 2 scenario/argument validation failure, 3 solver
// abort (a post-mortem dump directory is named on stderr).

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "raretrack/runner.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitSolverAbort = 3;

struct GlobalFlags {
    bool quiet = false;
    std::string log_events; // write the full event history here when non-empty
};

void say(const GlobalFlags& g, const std::string& line) {
    if (!g.quiet) std::cout << line << '\n';
}

int cmd_run(const GlobalFlags& g, const std::string& scenario_path, const std::string& out_dir) {
    raretrack::Scenario s = raretrack::load_scenario_file(scenario_path);
    try {
        raretrack::RunResult r = raretrack::run_scenario(s, !g.log_events.empty());
        const std::string summary = raretrack::write_run_artifacts(r, out_dir);
        if (!g.log_events.empty()) raretrack::write_events_csv(g.log_events, r.events);
        say(g, "wrote " + std::to_string(r.slices.size()) + " snapshot(s) and " + summary);
        char line[160];
        std::snprintf(line, sizeof line,
                      "area %.17g -> %.17g (residual %.3e), %zu particles, %zu events",
                      r.stats.area_begin, r.stats.area_end, r.stats.conservation_residual(),
                      r.stats.particles_end, r.stats.events);
        say(g, line);
        return 0;
    } catch (const raretrack::RunAbort& abort) {
        const std::string dir = raretrack::write_abort_dump(abort, out_dir + "/abort");
        std::cerr << "solver abort: " << abort.what() << "\ndump: " << dir << '\n';
        return kExitSolverAbort;
    }
}

int cmd_converge(const GlobalFlags& g, const std::string& scenario_path, std::vector<int> ns,
                 bool post, const std::string& analytic, const std::string& out_dir) {
    raretrack::Scenario s = raretrack::load_scenario_file(scenario_path);
    s.postprocess = s.postprocess || post;
    raretrack::ConvergeTable t;
    try {
        t = raretrack::converge_study(s, ns, analytic);
    } catch (const raretrack::RunAbort& abort) {
        const std::string dir = raretrack::write_abort_dump(abort, out_dir + "/abort");
        std::cerr << "solver abort: " << abort.what() << "\ndump: " << dir << '\n';
        return kExitSolverAbort;
    }
    std::filesystem::create_directories(out_dir);
    raretrack::write_converge_csv(out_dir + "/converge.csv", t);
    raretrack::write_converge_json(out_dir + "/converge.json", t);
    say(g, "reference: " + t.reference);
    for (const auto& row : t.rows) {
        char line[160];
        std::snprintf(line, sizeof line, "n=%-6d d=%-12.6g err_raw=%-14.6e err_sharp=%-14.6e",
                      row.n, row.d_max, row.err_raw, row.err_sharp);
        say(g, line);
    }
    char line[160];
    std::snprintf(line, sizeof line, "observed order: raw %.3f, sharpened %.3f", t.order_raw,
                  t.order_sharp);
    say(g, line);
    say(g, "wrote " + out_dir + "/converge.csv and converge.json");
    return 0;
}

int cmd_compare(const GlobalFlags& g, const std::string& scenario_path, std::vector<int> cells,
                const std::string& out_dir) {
    raretrack::Scenario s = raretrack::load_scenario_file(scenario_path);
    raretrack::CompareTable t;
    try {
        t = raretrack::compare_study(s, cells);
    } catch (const raretrack::RunAbort& abort) {
        const std::string dir = raretrack::write_abort_dump(abort, out_dir + "/abort");
        std::cerr << "solver abort: " << abort.what() << "\ndump: " << dir << '\n';
        return kExitSolverAbort;
    }
    std::filesystem::create_directories(out_dir);
    raretrack::write_compare_csv(out_dir + "/compare.csv", t);
    raretrack::write_compare_json(out_dir + "/compare.json", t);
    say(g, "particle run: n=" + std::to_string(t.particle_n));
    for (const auto& row : t.rows) {
        char line[120];
        std::snprintf(line, sizeof line, "cells=%-8d err=%-14.6e", row.cells, row.err);
        say(g, line);
    }
    char line[120];
    std::snprintf(line, sizeof line, "plateau (particle error floor): %.6e", t.plateau);
    say(g, line);
    say(g, "wrote " + out_dir + "/compare.csv and compare.json");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Characteristic-particle solver for 1D scalar conservation laws"};
    app.require_subcommand(1);

    GlobalFlags g;
    app.add_flag("--quiet", g.quiet, "suppress progress output (artifacts are still written)");
    app.add_option("--log-events", g.log_events,
                   "write the full event history (CSV) to this path");

    std::string scenario_path, out_dir = "out", analytic;
    std::vector<int> ns{50, 100, 200, 400};
    std::vector<int> cells{100, 200, 400, 800};
    bool post = false;

    CLI::App* run = app.add_subcommand("run", "run a scenario and write solution snapshots");
    run->add_option("scenario", scenario_path, "scenario JSON file")->required();
    run->add_option("-o,--out", out_dir, "output directory (default: out)");

    CLI::App* conv = app.add_subcommand(
        "converge", "L1 self-convergence study against a refined oracle or analytic case");
    conv->add_option("scenario", scenario_path, "scenario JSON file")->required();
    conv->add_option("--n", ns, "particle resolutions (>= 3 values)")->delimiter(',');
    conv->add_flag("--post", post, "force postprocessing on");
    conv->add_option("--analytic", analytic,
                     "analytic reference name (default: Godunov oracle at 16x finest)");
    conv->add_option("-o,--out", out_dir, "output directory (default: out)");

    CLI::App* comp = app.add_subcommand(
        "compare", "fixed particle run vs Godunov oracles of increasing resolution");
    comp->add_option("scenario", scenario_path, "scenario JSON file")->required();
    comp->add_option("--cells", cells, "oracle cell counts")->delimiter(',');
    comp->add_option("-o,--out", out_dir, "output directory (default: out)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitValidation; // --help exits 0; bad flags exit 2
    }

    try {
        if (run->parsed()) return cmd_run(g, scenario_path, out_dir);
        if (conv->parsed()) return cmd_converge(g, scenario_path, ns, post, analytic, out_dir);
        if (comp->parsed()) return cmd_compare(g, scenario_path, cells, out_dir);
    } catch (const raretrack::ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitSolverAbort;
    }
    return kExitValidation;
}
