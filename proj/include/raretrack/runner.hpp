#pragma once

// Executes scenarios end to end: sample, advance between output times, capture
// solution snapshots and diagnostics, and write the CSV/JSON artifacts. Also
// hosts the resolution studies (self-convergence and oracle comparison) the
// command-line driver exposes.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "raretrack/driver.hpp"
#include "raretrack/exact.hpp"
#include "raretrack/godunov.hpp"
#include "raretrack/postprocess.hpp"
#include "raretrack/sampling.hpp"
#include "raretrack/scenario.hpp"

namespace raretrack {

// Shortest decimal representation that round-trips to the same double: makes
// repeated runs byte-identical without printing 17 digits everywhere.
inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline const char* kind_name(EventKind k) {
    switch (k) {
    case EventKind::step: return "step";
    case EventKind::insert: return "insert";
    case EventKind::merge: return "merge";
    case EventKind::inflection_merge: return "inflection_merge";
    case EventKind::entropy_insert: return "entropy_insert";
    case EventKind::dedupe: return "dedupe";
    case EventKind::normalize: return "normalize";
    case EventKind::output: return "output";
    }
    return "unknown";
}

// Snapshot diagnostics for one output time. Entropy values are the Kruzkov
// integrals at the run's fixed levels; eval counts are cumulative.
struct DiagnosticsRow {
    double t = 0;
    double area = 0;
    double tv = 0;
    std::size_t particles = 0;
    FluxEvalCounts evals;
    std::vector<double> entropy;
};

// Solution state captured at one output time.
struct OutputSlice {
    double t = 0;
    ParticleFront front;
    std::optional<ParticleFront> sharp; // present when postprocessing is on
    DiagnosticsRow diag;
};

struct RunResult {
    Scenario scenario;
    std::vector<OutputSlice> slices;
    RunStats stats; // accumulated over all legs
    std::vector<EventRecord> events;
    std::vector<double> entropy_levels;
    double wall_seconds = 0;
};

// Thrown when the solver gives up mid-run; carries the state needed for a
// post-mortem dump (partial front, event history, time reached).
class RunAbort : public std::runtime_error {
public:
    RunAbort(const std::string& what, ParticleFront front_, std::vector<EventRecord> events_)
        : std::runtime_error(what), front(std::move(front_)), events(std::move(events_)) {}

    ParticleFront front;
    std::vector<EventRecord> events;
};

namespace detail {

inline void accumulate(RunStats& total, const RunStats& leg, bool first) {
    if (first) {
        total = leg;
        return;
    }
    total.t_end = leg.t_end;
    total.steps += leg.steps;
    total.merges += leg.merges;
    total.inflection_merges += leg.inflection_merges;
    total.inserts += leg.inserts;
    total.entropy_inserts += leg.entropy_inserts;
    total.dedupes += leg.dedupes;
    total.normalizes += leg.normalizes;
    total.events += leg.events;
    total.particles_end = leg.particles_end;
    total.max_particles = std::max(total.max_particles, leg.max_particles);
    total.area_end = leg.area_end;
    total.advection_area_delta += leg.advection_area_delta;
    total.management_area_delta += leg.management_area_delta;
    total.management_area_abs_max =
        std::max(total.management_area_abs_max, leg.management_area_abs_max);
    total.tv_end = leg.tv_end;
    total.tv_max_increase = std::max(total.tv_max_increase, leg.tv_max_increase);
    total.entropy_max_increase = std::max(total.entropy_max_increase, leg.entropy_max_increase);
}

inline DiagnosticsRow diagnostics_row(const ParticleFront& front,
                                      const std::vector<double>& levels) {
    DiagnosticsRow row;
    row.t = front.time();
    row.particles = front.size();
    row.evals = front.flux().evals(); // snapshot before diagnostic work
    FluxModel::CounterPause pause(front.flux());
    row.area = front.total_area();
    row.tv = front.total_variation();
    row.entropy.reserve(levels.size());
    for (double k : levels) row.entropy.push_back(kruzkov_entropy(front, k));
    return row;
}

} // namespace detail

// Run a scenario through all its output times. Collects a snapshot per output
// time, cumulative statistics, and (optionally including per-step records) the
// event history. Throws ScenarioError for invalid scenarios and RunAbort when
// the solver gives up.
inline RunResult run_scenario(const Scenario& s, bool record_steps = false) {
    s.validate();
    const auto wall0 = std::chrono::steady_clock::now();

    RunResult out;
    out.scenario = s;
    FluxModel flux = s.make_flux_model();
    flux.reset_counters();
    InitialCondition ic = s.make_initial();
    ParticleFront front = sample(flux, ic, s.d_max_effective(), s.d_min);
    SourceModel src = s.make_source_model();

    double umin = front.particles().front().u, umax = umin, smax0 = 0;
    for (const Particle& p : front.particles()) {
        umin = std::min(umin, p.u);
        umax = std::max(umax, p.u);
        smax0 = std::max(smax0, std::abs(p.speed));
    }
    const int levels = 9;
    out.entropy_levels.reserve(levels);
    for (int j = 0; j < levels; ++j)
        out.entropy_levels.push_back(umin + (umax - umin) * j / (levels - 1));

    EventLog log;
    RunOptions ro;
    ro.sink = log.sink();
    ro.record_steps = record_steps;
    ro.rk_substeps = s.rk_substeps;
    if (!src.empty()) {
        ro.source = &src;
        ro.dt_cap = s.dt_cap ? *s.dt_cap : s.d_max_effective() / std::max(1.0, smax0);
    } else if (s.dt_cap) {
        ro.dt_cap = *s.dt_cap;
    }

    std::vector<double> legs = s.output_times;
    if (s.t_end > legs.back()) legs.push_back(s.t_end); // advance past the last snapshot

    bool first = true;
    for (double T : legs) {
        RunStats leg;
        try {
            leg = run(front, T, ro);
        } catch (const std::exception& e) {
            throw RunAbort(e.what(), front, log.records);
        }
        detail::accumulate(out.stats, leg, first);
        first = false;
        const bool snapshot = T <= s.output_times.back();
        if (!snapshot) continue;
        OutputSlice slice{T, front, std::nullopt, detail::diagnostics_row(front, out.entropy_levels)};
        if (s.postprocess) slice.sharp = sharpen_shocks(front);
        out.slices.push_back(std::move(slice));
    }
    out.events = std::move(log.records);
    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    return out;
}

// ---------------------------------------------------------------------------
// Artifact writers. All numeric cells use shortest round-trip formatting, so a
// rerun of the same scenario produces byte-identical files.

inline void write_polyline_csv(const std::string& path, const Polyline& P) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "x,u,segment_id,is_jump\n";
    for (const PolylinePoint& p : P.pts)
        out << format_double(p.x) << ',' << format_double(p.u) << ',' << p.segment_id << ','
            << (p.is_jump ? 1 : 0) << '\n';
}

inline void write_diagnostics_csv(const std::string& path, const RunResult& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "t,area,tv,particles,evals_f,evals_df,evals_ddf";
    for (std::size_t j = 0; j < r.entropy_levels.size(); ++j) out << ",entropy_" << j;
    out << '\n';
    for (const OutputSlice& s : r.slices) {
        const DiagnosticsRow& d = s.diag;
        out << format_double(d.t) << ',' << format_double(d.area) << ',' << format_double(d.tv)
            << ',' << d.particles << ',' << d.evals.f << ',' << d.evals.df << ',' << d.evals.ddf;
        for (double e : d.entropy) out << ',' << format_double(e);
        out << '\n';
    }
}

inline void write_events_csv(const std::string& path, const std::vector<EventRecord>& events) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "t,kind,x,area_delta,tv_delta,entropy_delta,id_a,id_b,id_result,role_a,role_b,"
           "detail,n_after,dt\n";
    for (const EventRecord& e : events)
        out << format_double(e.t) << ',' << kind_name(e.kind) << ',' << format_double(e.x) << ','
            << format_double(e.area_delta) << ',' << format_double(e.tv_delta) << ','
            << format_double(e.entropy_delta) << ',' << e.id_a << ',' << e.id_b << ','
            << e.id_result << ',' << int(e.role_a) << ',' << int(e.role_b) << ',' << e.detail
            << ',' << e.n_after << ',' << format_double(e.dt) << '\n';
}

inline void write_particles_csv(const std::string& path, const ParticleFront& front) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "x,u,speed,role,id\n";
    for (const Particle& p : front.particles())
        out << format_double(p.x) << ',' << format_double(p.u) << ',' << format_double(p.speed)
            << ',' << int(p.role) << ',' << p.id << '\n';
}

// Writes raw_###.csv / sharp_###.csv per output time, diagnostics.csv, and
// summary.json into `dir` (created if needed). Returns the summary path.
inline std::string write_run_artifacts(const RunResult& r, const std::string& dir,
                                       int plot_samples = 8) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto path_of = [&](const std::string& leaf) { return (fs::path(dir) / leaf).string(); };
    char leaf[32];
    for (std::size_t i = 0; i < r.slices.size(); ++i) {
        std::snprintf(leaf, sizeof leaf, "raw_%03zu.csv", i);
        write_polyline_csv(path_of(leaf), evaluate(r.slices[i].front, plot_samples));
        if (r.slices[i].sharp) {
            std::snprintf(leaf, sizeof leaf, "sharp_%03zu.csv", i);
            write_polyline_csv(path_of(leaf), evaluate(*r.slices[i].sharp, plot_samples));
        }
    }
    write_diagnostics_csv(path_of("diagnostics.csv"), r);

    nlohmann::ordered_json j;
    j["scenario"] = r.scenario.name;
    j["t_end"] = r.stats.t_end;
    j["output_times"] = r.scenario.output_times;
    j["area_begin"] = r.stats.area_begin;
    j["area_end"] = r.stats.area_end;
    j["conservation_residual"] = r.stats.conservation_residual();
    j["tv_begin"] = r.stats.tv_begin;
    j["tv_end"] = r.stats.tv_end;
    j["tv_max_increase"] = r.stats.tv_max_increase;
    j["entropy_max_increase"] = r.stats.entropy_max_increase;
    j["entropy_levels"] = r.entropy_levels;
    j["particles_begin"] = r.stats.particles_begin;
    j["particles_end"] = r.stats.particles_end;
    j["max_particles"] = r.stats.max_particles;
    nlohmann::ordered_json ev;
    ev["steps"] = r.stats.steps;
    ev["inserts"] = r.stats.inserts;
    ev["merges"] = r.stats.merges;
    ev["inflection_merges"] = r.stats.inflection_merges;
    ev["entropy_inserts"] = r.stats.entropy_inserts;
    ev["dedupes"] = r.stats.dedupes;
    ev["normalizes"] = r.stats.normalizes;
    ev["total"] = r.stats.events;
    j["events"] = std::move(ev);
    if (!r.slices.empty()) {
        const FluxEvalCounts& c = r.slices.back().diag.evals;
        j["flux_evals"] = {{"f", c.f}, {"df", c.df}, {"ddf", c.ddf}, {"total", c.total()}};
    }
    j["wall_seconds"] = r.wall_seconds;

    const std::string summary = path_of("summary.json");
    std::ofstream out(summary, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + summary + "'");
    out << j.dump(2) << '\n';
    return summary;
}

// Post-mortem artifacts for an aborted run: final particle state plus the event
// history. Returns the directory written.
inline std::string write_abort_dump(const RunAbort& abort, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_particles_csv((fs::path(dir) / "abort_particles.csv").string(), abort.front);
    write_events_csv((fs::path(dir) / "abort_events.csv").string(), abort.events);
    std::ofstream out((fs::path(dir) / "abort_reason.txt").string(), std::ios::binary);
    out << abort.what() << "\nt_reached=" << format_double(abort.front.time()) << '\n';
    return dir;
}

// ---------------------------------------------------------------------------
// Resolution studies.

struct ConvergeRow {
    int n = 0;          // particle resolution (domain width / d_max)
    double d_max = 0;   // spacing bound used
    double err_raw = 0; // L1 vs reference, plain front
    double err_sharp = 0; // L1 vs reference, sharpened front
};

struct ConvergeTable {
    std::vector<ConvergeRow> rows;
    double order_raw = 0, order_sharp = 0; // least-squares slopes in log-log
    std::string reference;                 // "godunov_<cells>" or analytic name
};

namespace detail {

// Least-squares slope of log(err) against log(d). Rows with err <= 0 are
// skipped (exact matches would otherwise produce -inf).
inline double lsq_order(const std::vector<std::pair<double, double>>& pts) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t m = 0;
    for (auto [d, e] : pts) {
        if (!(e > 0)) continue;
        const double x = std::log(d), y = std::log(e);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    if (m < 2) return 0;
    const double den = m * sxx - sx * sx;
    return den == 0 ? 0 : (m * sxy - sx * sy) / den;
}

// Upper bound on |f'| over [umin, umax]: f' is monotone between inflections of
// f, so the extremes sit at the interval ends or at interior inflections.
inline double max_speed_over(const FluxModel& flux, double umin, double umax) {
    double smax = std::max(std::abs(flux.df(umin)), std::abs(flux.df(umax)));
    for (double w : flux.inflections())
        if (w > umin && w < umax) smax = std::max(smax, std::abs(flux.df(w)));
    return smax;
}

// Wave-speed bound for grid padding: the value range of the initial data,
// widened for source runs (transport over a bottom profile keeps u - b
// constant along characteristics, so values drift by at most osc(b); other
// sources get a factor-2 range margin), clamped to the flux domain.
inline double padding_speed(const FluxModel& flux, const InitialCondition& ic,
                            const SourceModel& src) {
    double umin = ic(ic.x_lo()), umax = umin;
    for (int i = 0; i <= 512; ++i) {
        const double u = ic(ic.x_lo() + (ic.x_hi() - ic.x_lo()) * i / 512.0);
        umin = std::min(umin, u);
        umax = std::max(umax, u);
    }
    if (!src.empty()) {
        if (src.has_bottom()) {
            double bmin = 0, bmax = 0; // the profile is 0 outside its window
            for (int i = 0; i <= 512; ++i) {
                const double b = src.bottom(ic.x_lo() + (ic.x_hi() - ic.x_lo()) * i / 512.0);
                bmin = std::min(bmin, b);
                bmax = std::max(bmax, b);
            }
            umin -= bmax - bmin;
            umax += bmax - bmin;
        } else {
            const double half = 0.5 * (umax - umin);
            umin -= half;
            umax += half;
        }
        umin = std::max(umin, flux.u_min());
        umax = std::min(umax, flux.u_max());
    }
    return max_speed_over(flux, umin, umax);
}

} // namespace detail

// Reference solution at the scenario's final time: the named analytic case, or
// a Godunov solve with `cells` cells padded so no wave reaches the grid edge.
inline Polyline reference_polyline(const Scenario& s, const std::string& analytic, int cells) {
    if (!analytic.empty()) return analytic_reference(analytic, s.t_end, s.x_lo, s.x_hi);
    FluxModel flux = s.make_flux_model();
    InitialCondition ic = s.make_initial();
    SourceModel src = s.make_source_model();
    GodunovOptions go;
    go.cells = cells;
    const double pad = detail::padding_speed(flux, ic, src) * s.t_end;
    go.pad_lo = pad;
    go.pad_hi = pad;
    if (s.dt_cap) go.dt_cap = *s.dt_cap;
    if (!src.empty()) go.source = &src;
    go.rk_substeps = s.rk_substeps;
    return to_polyline(godunov_solve(flux, ic, s.t_end, go));
}

// Self-convergence study: run the scenario at each resolution in `ns` and
// measure the L1 error at t_end against the reference (analytic case if named,
// else a Godunov oracle refined `oracle_refine` times finer than the finest
// run). Errors are reported for the raw and the sharpened front; observed
// orders are least-squares slopes over all rows.
inline ConvergeTable converge_study(const Scenario& base, std::vector<int> ns,
                                    const std::string& analytic = "", int oracle_refine = 16) {
    if (ns.size() < 3) throw ScenarioError("convergence study needs at least 3 resolutions");
    std::sort(ns.begin(), ns.end());
    if (ns.front() < 2) throw ScenarioError("convergence study resolutions must be >= 2");

    Scenario s = base;
    s.output_times = {s.t_end};
    ConvergeTable table;
    const int ref_cells = oracle_refine * ns.back();
    table.reference = analytic.empty() ? "godunov_" + std::to_string(ref_cells) : analytic;
    const Polyline ref = reference_polyline(s, analytic, ref_cells);

    std::vector<std::pair<double, double>> raw_pts, sharp_pts;
    for (int n : ns) {
        Scenario sn = s;
        sn.d_max.reset();
        sn.n = n;
        if (!(sn.d_max_effective() > sn.d_min)) sn.d_min = 0;
        RunResult r = run_scenario(sn);
        const ParticleFront& front = r.slices.back().front;
        ConvergeRow row;
        row.n = n;
        row.d_max = sn.d_max_effective();
        row.err_raw = l1_union(evaluate(front, 64), ref);
        row.err_sharp = l1_union(evaluate(sharpen_shocks(front), 64), ref);
        raw_pts.push_back({row.d_max, row.err_raw});
        sharp_pts.push_back({row.d_max, row.err_sharp});
        table.rows.push_back(row);
    }
    table.order_raw = detail::lsq_order(raw_pts);
    table.order_sharp = detail::lsq_order(sharp_pts);
    return table;
}

struct CompareRow {
    int cells = 0;
    double err = 0; // L1 between the fixed particle run and this oracle
};

struct CompareTable {
    std::vector<CompareRow> rows;
    double plateau = 0;  // error floor: the distance at the finest oracle
    int particle_n = 0;  // resolution of the fixed particle run
};

// Oracle cross-check: one particle run at the scenario's own resolution against
// Godunov solves of increasing resolution. As the oracle refines, the distance
// levels off at the particle method's own error (the plateau).
inline CompareTable compare_study(const Scenario& base, std::vector<int> cells_list) {
    if (cells_list.empty()) throw ScenarioError("comparison study needs at least 1 cell count");
    std::sort(cells_list.begin(), cells_list.end());
    if (cells_list.front() < 2) throw ScenarioError("comparison cell counts must be >= 2");

    Scenario s = base;
    s.output_times = {s.t_end};
    RunResult r = run_scenario(s);
    const Polyline mine = evaluate(s.postprocess ? *r.slices.back().sharp : r.slices.back().front,
                                   64);

    CompareTable table;
    table.particle_n =
        static_cast<int>(std::lround(s.width() / s.d_max_effective()));
    for (int cells : cells_list) {
        const Polyline oracle = reference_polyline(s, "", cells);
        table.rows.push_back({cells, l1_union(mine, oracle)});
    }
    table.plateau = table.rows.back().err;
    return table;
}

// ---------------------------------------------------------------------------
// Study table writers (CSV with the observed order appended, plus JSON).

inline void write_converge_csv(const std::string& path, const ConvergeTable& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "n,d_max,err_raw,err_sharp\n";
    for (const ConvergeRow& r : t.rows)
        out << r.n << ',' << format_double(r.d_max) << ',' << format_double(r.err_raw) << ','
            << format_double(r.err_sharp) << '\n';
    out << "order,," << format_double(t.order_raw) << ',' << format_double(t.order_sharp) << '\n';
}

inline void write_converge_json(const std::string& path, const ConvergeTable& t) {
    nlohmann::ordered_json j;
    j["reference"] = t.reference;
    j["rows"] = nlohmann::ordered_json::array();
    for (const ConvergeRow& r : t.rows)
        j["rows"].push_back({{"n", r.n},
                             {"d_max", r.d_max},
                             {"err_raw", r.err_raw},
                             {"err_sharp", r.err_sharp}});
    j["order_raw"] = t.order_raw;
    j["order_sharp"] = t.order_sharp;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

inline void write_compare_csv(const std::string& path, const CompareTable& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "cells,err\n";
    for (const CompareRow& r : t.rows) out << r.cells << ',' << format_double(r.err) << '\n';
    out << "plateau," << format_double(t.plateau) << '\n';
}

inline void write_compare_json(const std::string& path, const CompareTable& t) {
    nlohmann::ordered_json j;
    j["particle_n"] = t.particle_n;
    j["rows"] = nlohmann::ordered_json::array();
    for (const CompareRow& r : t.rows) j["rows"].push_back({{"cells", r.cells}, {"err", r.err}});
    j["plateau"] = t.plateau;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

} // namespace raretrack
