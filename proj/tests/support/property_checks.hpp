#pragma once

// Randomized property checks shared by the unit test suite and the acceptance
// runner. Each check builds one random instance from the supplied RNG and
// returns ok/what; callers loop and count.

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "raretrack/flux.hpp"
#include "raretrack/management.hpp"
#include "raretrack/wave.hpp"

namespace raretrack::props {

struct CheckResult {
    bool ok = true;
    std::string what;
};

inline CheckResult fail(const std::string& what) { return {false, what}; }

// Rotate through the built-in fluxes; the S-shaped one contributes both its
// convex and its concave side (value draws stay clear of the inflection).
inline FluxModel flux_for(int pick) {
    switch (pick % 3) {
        case 0: return make_flux("burgers");
        case 1: return make_flux("quartic");
        default: return make_flux("buckley_leverett");
    }
}

// Admissible value band for random draws: inside the flux domain and on one
// side of any inflection.
inline std::pair<double, double> value_band(const FluxModel& flux, std::mt19937& rng) {
    if (!flux.inflections().empty()) {
        const double w = flux.inflections()[0];
        std::bernoulli_distribution side(0.5);
        if (side(rng)) return {std::max(flux.u_min(), 0.0), w - 0.02};
        return {w + 0.02, std::min(flux.u_max(), 1.0)};
    }
    return {-1.5, 1.5};
}

// --- 1. refinement identity ---------------------------------------------------
// Inserting the area-conserving particle into a stretched segment must leave the
// interpolant pointwise unchanged: sub-waves of a similarity wave are the wave
// itself, so the area condition picks exactly the wave value.
inline CheckResult refinement_identity(std::mt19937& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const FluxModel flux = flux_for(static_cast<int>(rng() % 3));
    const auto [blo, bhi] = value_band(flux, rng);
    double u1 = 0, u2 = 0;
    for (int tries = 0;; ++tries) {
        u1 = blo + (bhi - blo) * unit(rng);
        u2 = blo + (bhi - blo) * unit(rng);
        if (std::fabs(u2 - u1) >= 0.05 * (bhi - blo) &&
            std::fabs(flux.df(u2) - flux.df(u1)) >= 1e-4)
            break;
        if (tries > 200) return fail("refinement_identity: could not draw values");
    }
    if (flux.df(u2) < flux.df(u1)) std::swap(u1, u2); // stretched segment: f' increases
    const double x1 = -5.0 + 10.0 * unit(rng);
    const double w = 0.1 + 2.0 * unit(rng);
    const double x2 = x1 + w;
    const double xm = x1 + w * (0.1 + 0.8 * unit(rng));
    const double um = insert_value(flux, x1, u1, x2, u2, xm);

    const double lo = std::min(u1, u2), hi = std::max(u1, u2);
    if (!(um >= lo && um <= hi)) return fail("refinement_identity: inserted value out of range");

    const double xtol = 1e-10 * std::max(1.0, w);
    for (int s = 0; s <= 16; ++s) {
        // endpoints taken exactly: u1 + delta rounds past u2 by an ulp otherwise
        const double u = s == 16 ? u2 : u1 + (u2 - u1) * s / 16.0;
        const double xp = interpolate(flux, x1, u1, x2, u2, u);
        const bool first = (u - u1) * (u - um) <= 0;
        const double xc = first ? interpolate(flux, x1, u1, xm, um, u)
                                : interpolate(flux, xm, um, x2, u2, u);
        if (std::fabs(xc - xp) > xtol) {
            std::ostringstream os;
            os << "refinement_identity: interpolant moved by " << (xc - xp) << " at u=" << u;
            return fail(os.str());
        }
    }
    const double a_parent = segment_area(flux, x1, u1, x2, u2);
    const double a_split =
        segment_area(flux, x1, u1, xm, um) + segment_area(flux, xm, um, x2, u2);
    if (std::fabs(a_split - a_parent) > 1e-11 * (1.0 + std::fabs(a_parent)))
        return fail("refinement_identity: area not conserved by insertion");
    return {};
}

// --- 2. merge value vs independent bisection -----------------------------------
// Solve the same area condition with an independent nonlinear average (straight
// from the Legendre transform) and plain bisection; the library value must agree,
// including the clamp-to-endpoint (absorb) cases.
inline CheckResult merge_matches_bisection(std::mt19937& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const FluxModel flux = flux_for(static_cast<int>(rng() % 3));
    const auto [blo, bhi] = value_band(flux, rng);
    auto draw_u = [&] { return blo + (bhi - blo) * unit(rng); };
    double u1 = draw_u(), u2 = draw_u(), u3 = draw_u(), u4 = draw_u();
    for (int tries = 0; std::fabs(u2 - u3) < 1e-3 * (bhi - blo); ++tries) {
        u3 = draw_u();
        if (tries > 200) return fail("merge_matches_bisection: could not draw pair");
    }
    const double x1 = -5.0 + 10.0 * unit(rng);
    std::bernoulli_distribution stack(0.3);
    const double g1 = stack(rng) ? 0.0 : 2.0 * unit(rng);
    const double g2 = stack(rng) ? 0.0 : unit(rng);
    const double g3 = 0.01 + 2.0 * unit(rng);
    const MergeContext c{x1, u1, x1 + g1, u2, x1 + g1 + g2, u3, x1 + g1 + g2 + g3, u4};

    const double u_lib = merge_value(flux, c);

    auto avg = [&](double a, double b) {
        const double da = flux.df(a), db = flux.df(b);
        if (speeds_degenerate(da, db)) return 0.5 * (a + b);
        return (flux.legendre(b) - flux.legendre(a)) / (db - da);
    };
    const double x23 = 0.5 * (c.x2 + c.x3);
    const double rhs = (c.x2 - c.x1) * avg(c.u1, c.u2) + (c.x3 - c.x2) * avg(c.u2, c.u3) +
                       (c.x4 - c.x3) * avg(c.u3, c.u4);
    auto h = [&](double v) {
        return (x23 - c.x1) * avg(c.u1, v) + (c.x4 - x23) * avg(v, c.u4) - rhs;
    };
    const double lo = std::min(u2, u3), hi = std::max(u2, u3);
    double u_orc;
    if (h(lo) >= 0) {
        u_orc = lo;
    } else if (h(hi) <= 0) {
        u_orc = hi;
    } else {
        double a = lo, b = hi;
        for (int it = 0; it < 200 && a < b; ++it) {
            const double mid = 0.5 * (a + b);
            if (mid <= a || mid >= b) break;
            (h(mid) <= 0 ? a : b) = mid;
        }
        u_orc = 0.5 * (a + b);
    }
    const double vscale = std::max({1.0, std::fabs(u1), std::fabs(u2), std::fabs(u3),
                                    std::fabs(u4)});
    if (!(u_lib >= lo && u_lib <= hi))
        return fail("merge_matches_bisection: merged value outside the pair interval");
    if (std::fabs(u_lib - u_orc) > 1e-7 * vscale) {
        std::ostringstream os;
        os << "merge_matches_bisection: lib " << u_lib << " vs bisection " << u_orc;
        return fail(os.str());
    }
    return {};
}

// --- 3. management is TVD -------------------------------------------------------
// A full management pass on a random front must not increase total variation --
// checked per event and for the pass as a whole -- and must account for every
// area change it makes.
inline CheckResult management_is_tvd(std::mt19937& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const FluxModel flux = flux_for(static_cast<int>(rng() % 3));
    const auto [blo, bhi] = value_band(flux, rng);
    std::uniform_int_distribution<int> count(6, 30);
    const int n = count(rng);
    std::vector<double> xs;
    double x = 10.0 * unit(rng);
    std::bernoulli_distribution stack(0.25);
    for (int i = 0; i < n; ++i) {
        xs.push_back(x);
        x += stack(rng) ? 0.0 : 0.8 * unit(rng);
    }
    ParticleFront front(flux, 10.0);
    for (int i = 0; i < n; ++i) front.append(xs[static_cast<std::size_t>(i)],
                                             blo + (bhi - blo) * unit(rng));

    const double tv0 = front.total_variation();
    const double area0 = front.total_area();
    ManageOptions opts;
    opts.trigger_gap = 0.7;
    // Absorb-type merges on random data need ~45 flank halvings before the
    // admissibility slack clears; the default retry cap is tuned for fronts
    // produced by actual evolution, so widen it here to exercise completed
    // passes rather than the documented abort.
    opts.entropy_retry_cap = 64;
    double worst_tv_delta = 0, area_sum = 0;
    bool completed = true;
    try {
        manage(front, opts, [&](const EventRecord& r) {
            worst_tv_delta = std::max(worst_tv_delta, r.tv_delta);
            area_sum += r.area_delta;
        });
    } catch (const ManagementError&) {
        // the entropy-fix retry cap is a documented abort on adversarial data;
        // events emitted before it must still have been TVD (checked below)
        completed = false;
    }
    if (worst_tv_delta > 1e-12) {
        std::ostringstream os;
        os << "management_is_tvd: event increased TV by " << worst_tv_delta;
        return fail(os.str());
    }
    if (!completed) return {true, "aborted"};
    if (front.total_variation() > tv0 + 1e-12)
        return fail("management_is_tvd: pass increased total variation");
    const double area1 = front.total_area();
    if (std::fabs(area1 - area0 - area_sum) > 1e-10 * (1.0 + std::fabs(area0))) {
        std::ostringstream os;
        os << "management_is_tvd: unaccounted area change "
           << (area1 - area0 - area_sum) << " (area0 " << area0 << ")";
        return fail(os.str());
    }
    front.validate();
    return {};
}

struct ManyResult {
    int failures = 0;
    int notes = 0; // passed-with-note instances (e.g. documented aborts)
    std::string first_failure;
};

// Run a check n times, counting failures and noted passes.
template <class Check>
inline ManyResult run_many(Check&& check, int n, unsigned seed) {
    std::mt19937 rng(seed);
    ManyResult out;
    for (int i = 0; i < n; ++i) {
        CheckResult r;
        try {
            r = check(rng);
        } catch (const std::exception& e) {
            r = fail(std::string("unexpected exception: ") + e.what());
        }
        if (!r.ok) {
            ++out.failures;
            if (out.first_failure.empty()) {
                std::ostringstream os;
                os << "instance " << i << ": " << r.what;
                out.first_failure = os.str();
            }
        } else if (!r.what.empty()) {
            ++out.notes;
        }
    }
    return out;
}

} // namespace raretrack::props
