#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "raretrack/management.hpp"
#include "raretrack/sources.hpp"

namespace raretrack {

class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

// In-memory event log; pass log.sink() as the event sink.
struct EventLog {
    std::vector<EventRecord> records;
    EventSink sink() {
        return [this](const EventRecord& r) { records.push_back(r); };
    }
};

struct RunOptions {
    // Abort when total events exceed budget_factor * (n_initial + inserted) * (1 + elapsed).
    double budget_factor = 10.0;
    bool track_entropy = true;
    int entropy_levels = 9;
    int entropy_retry_cap = 16;
    EventSink sink;                       // receives every event record (may be empty)
    bool record_steps = true;             // include step records in the sink stream
    const SourceModel* source = nullptr;  // non-null: balance-law mode
    double dt_cap = std::numeric_limits<double>::infinity(); // max step (finite for sources)
    int rk_substeps = 4;                  // RK4 substeps per step in source mode
};

struct RunStats {
    double t_begin = 0, t_end = 0;
    std::size_t steps = 0, merges = 0, inflection_merges = 0, inserts = 0,
                entropy_inserts = 0, dedupes = 0, normalizes = 0, events = 0;
    std::size_t particles_begin = 0, particles_end = 0, max_particles = 0;
    double area_begin = 0, area_end = 0;
    // Conservative runs: exact integral of the boundary Legendre rate; source runs:
    // measured per-step area change (transport + source together).
    double advection_area_delta = 0;
    double management_area_delta = 0; // signed sum of event-local changes
    double management_area_abs_max = 0;
    double tv_begin = 0, tv_end = 0;
    double tv_max_increase = 0;      // largest single-event TV increase
    double entropy_max_increase = 0; // largest single-event Kruzkov increase

    // Deviation of the final area from initial area plus all accounted changes.
    double conservation_residual() const {
        return area_end - area_begin - advection_area_delta - management_area_delta;
    }
};

// Advance the front to t_end, settling the front (merges, insertions, dedupe) after
// every step. Steps end at the earliest of: next collision, dt_cap, t_end.
inline RunStats run(ParticleFront& front, double t_end, const RunOptions& opts = {}) {
    RunStats st;
    st.t_begin = front.time();
    st.particles_begin = front.size();
    st.max_particles = front.size();
    st.area_begin = front.total_area();
    st.tv_begin = front.total_variation();
    if (t_end < front.time()) throw SolverError("run: t_end is before the front time");
    const bool sourced = opts.source != nullptr && !opts.source->empty();
    if (sourced && !std::isfinite(opts.dt_cap))
        throw SolverError("run: source mode requires a finite dt_cap");

    std::size_t inserted_total = 0;
    auto sink = [&](const EventRecord& r) {
        ++st.events;
        switch (r.kind) {
            case EventKind::merge: ++st.merges; break;
            case EventKind::inflection_merge: ++st.inflection_merges; break;
            case EventKind::insert: ++st.inserts; break;
            case EventKind::entropy_insert: ++st.entropy_inserts; break;
            case EventKind::dedupe: ++st.dedupes; break;
            case EventKind::normalize: ++st.normalizes; break;
            case EventKind::step: break;
            case EventKind::output: break;
        }
        if (r.kind != EventKind::step) {
            st.management_area_delta += r.area_delta;
            st.management_area_abs_max =
                std::max(st.management_area_abs_max, std::abs(r.area_delta));
            st.tv_max_increase = std::max(st.tv_max_increase, r.tv_delta);
            st.entropy_max_increase = std::max(st.entropy_max_increase, r.entropy_delta);
        }
        if (opts.sink && (opts.record_steps || r.kind != EventKind::step)) opts.sink(r);
    };

    ManageOptions mo;
    mo.trigger_gap = std::max(front.d_min(), front.overtake_tol());
    mo.overtake_allowance =
        sourced ? std::numeric_limits<double>::infinity() : front.overtake_tol();
    mo.entropy_retry_cap = opts.entropy_retry_cap;
    mo.track_entropy = opts.track_entropy;
    mo.entropy_levels = opts.entropy_levels;

    auto settle = [&] {
        Manager m(front, mo, sink);
        m.pass();
        inserted_total += m.inserted_count();
        st.max_particles = std::max(st.max_particles, front.size());
    };
    auto check_budget = [&] {
        const double elapsed = front.time() - st.t_begin;
        const double budget = opts.budget_factor *
                              static_cast<double>(st.particles_begin + inserted_total) *
                              (1.0 + elapsed);
        if (static_cast<double>(st.events) > budget)
            throw SolverError("run: event budget exceeded (" + std::to_string(st.events) +
                              " events by t=" + std::to_string(front.time()) + ")");
    };

    settle();
    const double eps_t = 1e-12 * std::max(1.0, std::abs(t_end));
    int zero_steps = 0;
    while (t_end - front.time() > eps_t) {
        const double dt_next =
            sourced ? next_event_source(front, opts.dt_cap) : front.next_event();
        const double dt = std::min({dt_next, t_end - front.time(), opts.dt_cap});
        if (dt == 0.0) {
            if (++zero_steps > 100)
                throw SolverError("run: no progress (the front keeps colliding at one time)");
        } else {
            zero_steps = 0;
        }
        EventRecord step;
        step.kind = EventKind::step;
        step.dt = dt;
        if (!sourced) {
            const double rate = front.area_rate();
            front.advance(dt, /*check_collisions=*/false);
            st.advection_area_delta += rate * dt;
            step.area_delta = rate * dt;
        } else {
            const double a0 = front.total_area();
            advance_with_source(front, *opts.source, dt, opts.rk_substeps);
            const double da = front.total_area() - a0;
            st.advection_area_delta += da;
            step.area_delta = da;
        }
        ++st.steps;
        step.t = front.time();
        step.n_after = front.size();
        sink(step);
        settle();
        check_budget();
    }
    if (std::abs(front.time() - t_end) <= eps_t) front.set_time(t_end);

    st.t_end = front.time();
    st.particles_end = front.size();
    st.area_end = front.total_area();
    st.tv_end = front.total_variation();
    return st;
}

} // namespace raretrack
