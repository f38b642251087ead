#pragma once

// Closed-form and method-of-characteristics reference solutions for validating
// the numerical solvers. Everything here is derived from the flux alone, with
// no shared machinery beyond root finding.

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include "raretrack/flux.hpp"
#include "raretrack/postprocess.hpp"
#include "raretrack/root.hpp"

namespace raretrack {

class ExactError : public std::runtime_error {
  public:
    explicit ExactError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

// Solve f'(u) = xi on [a, b] where f' is monotone, by bisection to machine
// precision in u (a residual test in f' would lose digits wherever f'' ~ 0).
inline double invert_df(const FluxModel& flux, double a, double b, double xi) {
    const bool increasing = flux.df(b) > flux.df(a);
    double lo = a, hi = b;
    for (int it = 0; it < 200 && lo < hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const bool below = increasing ? flux.df(mid) <= xi : flux.df(mid) >= xi;
        if (below)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

// Entropy solution of the Riemann problem centred at x0, for a flux convex over
// the value interval: ul > ur is a shock at the chord speed, ul < ur a centred
// rarefaction with u(x,t) solving f'(u) = (x - x0)/t inside the fan.
inline double convex_riemann(const FluxModel& flux, double ul, double ur, double x0, double x,
                             double t) {
    if (ul == ur) return ul;
    const ConvexitySign sign = convexity_sign(flux, ul, ur);
    if (sign != ConvexitySign::convex)
        throw ExactError("convex_riemann: flux is not convex over the value interval");
    if (!(t >= 0)) throw ExactError("convex_riemann: t must be non-negative");
    if (t == 0) return x < x0 ? ul : ur;
    const double xi = (x - x0) / t;
    if (ul > ur) {
        const double s = (flux.f(ul) - flux.f(ur)) / (ul - ur);
        return xi < s ? ul : ur;
    }
    const double dl = flux.df(ul), dr = flux.df(ur);
    if (xi <= dl) return ul;
    if (xi >= dr) return ur;
    return detail::invert_df(flux, ul, ur, xi);
}

// Method of characteristics for smooth initial data before any shock forms:
// the value at (x, t) is u0(xi) where xi + t f'(u0(xi)) = x. Pre-shock that map
// is strictly increasing in xi, so plain bisection over [xi_lo, xi_hi] applies.
inline double moc_value(const FluxModel& flux, const std::function<double(double)>& u0, double x,
                        double t, double xi_lo, double xi_hi) {
    if (!(t >= 0)) throw ExactError("moc_value: t must be non-negative");
    if (!(xi_lo < xi_hi)) throw ExactError("moc_value: empty bracket");
    auto X = [&](double xi) { return xi + t * flux.df(u0(xi)) - x; };
    double lo = xi_lo, hi = xi_hi;
    double Xlo = X(lo), Xhi = X(hi);
    if (Xlo > 0 || Xhi < 0) throw ExactError("moc_value: point not bracketed by [xi_lo, xi_hi]");
    for (int it = 0; it < 200 && lo < hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (X(mid) <= 0)
            lo = mid;
        else
            hi = mid;
    }
    return u0(0.5 * (lo + hi));
}

// Value where the chord from the origin is tangent to the flux graph:
// f'(u) u - f(u) = 0 on (lo, hi). For an S-shaped flux with f(0) = 0 this is
// the post-shock state of the Riemann problem dropping to zero.
inline double fan_shock_tangency(const FluxModel& flux, double lo, double hi) {
    const RootResult r = newton_bisection(
        [&](double u) { return std::pair<double, double>(flux.legendre(u), flux.ddf(u) * u); },
        lo, hi, 0.5 * (lo + hi), 1e-14);
    if (!r.converged) throw ExactError("fan_shock_tangency: root search failed");
    return r.x;
}

// Riemann problem ul = 1 -> ur = 0 for an S-shaped flux (convex then concave,
// one inflection, f(0) = 0, f'(0) = f'(1) = 0): a rarefaction from 1 down to
// the tangency value u_t followed by a shock at speed f'(u_t) = f(u_t)/u_t.
// This is the upper concave envelope of f over [0, 1].
inline double s_riemann_one_zero(const FluxModel& flux, double x0, double x, double t) {
    if (flux.inflections().size() != 1)
        throw ExactError("s_riemann_one_zero: flux must have exactly one inflection");
    if (!(t >= 0)) throw ExactError("s_riemann_one_zero: t must be non-negative");
    if (t == 0) return x < x0 ? 1.0 : 0.0;
    const double w = flux.inflections()[0];
    const double ut = fan_shock_tangency(flux, w, 1.0);
    const double s = flux.df(ut);
    const double xi = (x - x0) / t;
    if (xi >= s) return 0.0;
    if (xi <= flux.df(1.0)) return 1.0;
    // inside the fan: f' decreases from s at u_t to f'(1) at 1
    return detail::invert_df(flux, ut, 1.0, xi);
}

// Exact-solution polylines for named benchmark cases, evaluated at time t on
// [x_lo, x_hi]. Jumps carry exact positions (double points); smooth fans are
// parametric in u, so the only discretization is polyline interpolation.
//   burgers_fan           Burgers, 0 -> 1 jump at x=0: centred rarefaction
//   burgers_shock         Burgers, 1 -> 0 jump at x=0: shock at x = t/2
//   quartic_preshock_moc  f = u^4/4, u0 = exp(-x^2) cos(pi x): characteristics
//                         (valid only while the solution stays smooth)
//   bl_riemann            Buckley-Leverett (m = 2), 1 -> 0 jump at x=0:
//                         rarefaction into the tangency value, then a shock
inline Polyline analytic_reference(const std::string& name, double t, double x_lo, double x_hi,
                                   int samples = 4096) {
    if (!(t >= 0)) throw ExactError("analytic_reference: t must be non-negative");
    if (!(x_lo < x_hi)) throw ExactError("analytic_reference: empty window");
    if (samples < 2) throw ExactError("analytic_reference: need at least 2 samples");
    Polyline out;
    auto push = [&](double x, double u, bool jump = false) {
        out.pts.push_back({x, u, 0, jump});
    };
    auto clamp_push = [&](double x, double u, bool jump = false) {
        if (x >= x_lo && x <= x_hi) push(x, u, jump);
    };
    if (name == "burgers_fan") {
        // u = 0 for x <= 0, x/t inside the fan, 1 for x >= t; linear in x, so
        // the polyline is exact.
        if (t == 0) {
            push(x_lo, x_lo < 0 ? 0.0 : 1.0);
            clamp_push(0.0, 0.0);
            clamp_push(0.0, 1.0, true);
            push(x_hi, x_hi <= 0 ? 0.0 : 1.0);
            return out;
        }
        push(x_lo, std::fmin(std::fmax(x_lo / t, 0.0), 1.0));
        clamp_push(0.0, 0.0);
        clamp_push(t, 1.0);
        push(x_hi, std::fmin(std::fmax(x_hi / t, 0.0), 1.0));
        return out;
    }
    if (name == "burgers_shock") {
        const double xs = 0.5 * t;
        push(x_lo, x_lo < xs ? 1.0 : 0.0);
        clamp_push(xs, 1.0);
        clamp_push(xs, 0.0, true);
        push(x_hi, x_hi < xs ? 1.0 : 0.0);
        return out;
    }
    if (name == "quartic_preshock_moc") {
        const FluxModel flux = make_flux("quartic");
        auto u0 = [](double x) { return std::exp(-x * x) * std::cos(3.14159265358979323846 * x); };
        // Characteristic speeds are bounded by max |u0|^3 <= 1, so feet in
        // [x_lo - t, x_hi + t] cover the window.
        const double a = x_lo - t, b = x_hi + t;
        double prev_x = -std::numeric_limits<double>::infinity();
        for (int j = 0; j <= samples; ++j) {
            const double x0 = a + (b - a) * j / samples;
            const double u = u0(x0);
            const double x = x0 + t * flux.df(u);
            if (!(x >= prev_x))
                throw ExactError("quartic_preshock_moc: characteristics cross (t past "
                                 "shock formation)");
            prev_x = x;
            if (x >= x_lo && x <= x_hi) push(x, u);
        }
        if (out.pts.empty())
            throw ExactError("quartic_preshock_moc: no characteristic lands in the window");
        if (out.pts.front().x > x_lo)
            out.pts.insert(out.pts.begin(), {x_lo, out.pts.front().u, 0, false});
        if (out.pts.back().x < x_hi) push(x_hi, out.pts.back().u);
        return out;
    }
    if (name == "bl_riemann") {
        const FluxModel flux = make_flux("buckley_leverett", {{"m", 2.0}});
        if (t == 0) {
            push(x_lo, x_lo < 0 ? 1.0 : 0.0);
            clamp_push(0.0, 1.0);
            clamp_push(0.0, 0.0, true);
            push(x_hi, x_hi < 0 ? 1.0 : 0.0);
            return out;
        }
        const double w = flux.inflections().at(0);
        const double ut = fan_shock_tangency(flux, w, 1.0);
        const double s = flux.df(ut);
        push(x_lo, s_riemann_one_zero(flux, 0.0, x_lo, t));
        clamp_push(0.0, 1.0); // fan head: f'(1) = 0
        for (int j = 1; j < samples; ++j) {
            const double u = 1.0 + (ut - 1.0) * j / samples;
            clamp_push(flux.df(u) * t, u);
        }
        clamp_push(s * t, ut);
        clamp_push(s * t, 0.0, true);
        push(x_hi, s_riemann_one_zero(flux, 0.0, x_hi, t));
        return out;
    }
    throw ExactError("analytic_reference: unknown case '" + name + "'");
}

} // namespace raretrack
