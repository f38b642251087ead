#pragma once

// First-order Godunov finite-volume solver on a uniform grid, with optional
// source terms via Strang splitting. This is a deliberately independent
// cross-check for the particle solver: fixed grid, cell averages, numerical
// fluxes — none of the machinery the particle method relies on.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "raretrack/flux.hpp"
#include "raretrack/postprocess.hpp"
#include "raretrack/sampling.hpp"
#include "raretrack/sources.hpp"

namespace raretrack {

class ReferenceError : public std::runtime_error {
  public:
    explicit ReferenceError(const std::string& what) : std::runtime_error(what) {}
};

// Uniform grid of cell averages; x_lo is the left face of cell 0.
struct FVGrid {
    double x_lo = 0;
    double dx = 0;
    double t = 0;
    std::vector<double> u;

    double x_hi() const { return x_lo + dx * static_cast<double>(u.size()); }
    double face(std::size_t i) const { return x_lo + dx * static_cast<double>(i); }
    double center(std::size_t i) const { return x_lo + dx * (static_cast<double>(i) + 0.5); }
    double mass() const {
        double s = 0;
        for (double v : u) s += v;
        return s * dx;
    }
};

// Godunov numerical flux for scalar laws in Osher's closed form:
//   ul <= ur: min of f over [ul, ur];  ul > ur: max of f over [ur, ul].
// The extremum sits at an endpoint or an interior stationary point of f.
inline double godunov_flux(const FluxModel& flux, double ul, double ur) {
    const double lo = ul < ur ? ul : ur, hi = ul < ur ? ur : ul;
    double best = flux.f(ul);
    const double fr = flux.f(ur);
    if (ul <= ur) {
        if (fr < best) best = fr;
        for (double s : flux.stationaries())
            if (s > lo && s < hi) {
                const double v = flux.f(s);
                if (v < best) best = v;
            }
    } else {
        if (fr > best) best = fr;
        for (double s : flux.stationaries())
            if (s > lo && s < hi) {
                const double v = flux.f(s);
                if (v > best) best = v;
            }
    }
    return best;
}

// Largest |f'| over the cell values. |f'| can peak strictly between samples only
// where f'' vanishes, so flux inflections inside the value range are checked too.
inline double max_wave_speed(const FluxModel& flux, const std::vector<double>& u) {
    if (u.empty()) return 0;
    double umin = u[0], umax = u[0], smax = 0;
    for (double v : u) {
        const double s = std::fabs(flux.df(v));
        if (s > smax) smax = s;
        if (v < umin) umin = v;
        if (v > umax) umax = v;
    }
    for (double w : flux.inflections())
        if (w > umin && w < umax) {
            const double s = std::fabs(flux.df(w));
            if (s > smax) smax = s;
        }
    return smax;
}

namespace detail {

// Cell values are produced by averaging and flux differencing, which can land a
// rounding epsilon outside a bounded flux domain (the schemes are range-bounded
// only in exact arithmetic). Snap such values back; anything further outside is
// a genuine error and is left for the flux domain check to reject.
inline double snap_to_domain(const FluxModel& flux, double u) {
    const double slack = 1e-12 * std::max(1.0, std::fabs(u));
    if (u < flux.u_min() && u >= flux.u_min() - slack) return flux.u_min();
    if (u > flux.u_max() && u <= flux.u_max() + slack) return flux.u_max();
    return u;
}
} // namespace detail

struct GodunovOptions {
    int cells = 400; // resolution over the initial-condition domain
    double pad_lo = 0, pad_hi = 0; // grid extension, rounded up to whole cells
    double cfl = 0.9;
    double dt_cap = std::numeric_limits<double>::infinity();
    const SourceModel* source = nullptr;
    int rk_substeps = 4; // RK4 substeps per Strang half-step
    std::size_t max_steps = 50'000'000;
};

// Cell averages of the initial condition (exact per-piece integrals); padding
// cells take the constant extension of the nearest domain endpoint value.
inline FVGrid fv_initialize(const FluxModel& flux, const InitialCondition& ic,
                            const GodunovOptions& opt = {}) {
    if (opt.cells < 1) throw ReferenceError("fv_initialize: need at least one cell");
    if (opt.pad_lo < 0 || opt.pad_hi < 0)
        throw ReferenceError("fv_initialize: negative padding");
    FVGrid g;
    g.dx = (ic.x_hi() - ic.x_lo()) / opt.cells;
    const auto pad_cells = [&](double pad) {
        return pad > 0 ? static_cast<std::size_t>(std::ceil(pad / g.dx - 1e-9)) : 0u;
    };
    const std::size_t nlo = pad_cells(opt.pad_lo), nhi = pad_cells(opt.pad_hi);
    g.x_lo = ic.x_lo() - g.dx * static_cast<double>(nlo);
    g.u.resize(nlo + static_cast<std::size_t>(opt.cells) + nhi);
    const double left_value = ic(ic.x_lo());
    const double right_value = ic(ic.x_hi());
    for (std::size_t i = 0; i < nlo; ++i) g.u[i] = left_value;
    for (int i = 0; i < opt.cells; ++i) {
        const double a = ic.x_lo() + g.dx * i;
        const double b = (i + 1 == opt.cells) ? ic.x_hi() : ic.x_lo() + g.dx * (i + 1);
        g.u[nlo + static_cast<std::size_t>(i)] =
            detail::snap_to_domain(flux, ic.integral(a, b) / g.dx);
    }
    for (std::size_t i = nlo + static_cast<std::size_t>(opt.cells); i < g.u.size(); ++i)
        g.u[i] = right_value;
    return g;
}

namespace detail {

// Classical RK4 on du/dt = g(x, u) with x held at the cell center.
inline void fv_source_half(FVGrid& g, const SourceModel& src, double dt_half, int substeps) {
    if (substeps < 1) throw ReferenceError("fv_step: rk_substeps must be >= 1");
    const double h = dt_half / substeps;
    for (std::size_t i = 0; i < g.u.size(); ++i) {
        const double x = g.center(i);
        double u = g.u[i];
        for (int s = 0; s < substeps; ++s) {
            const double k1 = src.g(x, u);
            const double k2 = src.g(x, u + 0.5 * h * k1);
            const double k3 = src.g(x, u + 0.5 * h * k2);
            const double k4 = src.g(x, u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        g.u[i] = u;
    }
}

} // namespace detail

// One step: (optional half source) -> Godunov advection with zero-gradient
// ghost cells -> (optional half source).
inline void fv_step(const FluxModel& flux, FVGrid& g, double dt, const GodunovOptions& opt = {}) {
    if (!(dt > 0) || !std::isfinite(dt)) throw ReferenceError("fv_step: dt must be positive");
    const std::size_t n = g.u.size();
    if (n == 0) throw ReferenceError("fv_step: empty grid");
    const bool sourced = opt.source != nullptr && !opt.source->empty();
    if (sourced) detail::fv_source_half(g, *opt.source, 0.5 * dt, opt.rk_substeps);
    std::vector<double> F(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        const double ul = i == 0 ? g.u[0] : g.u[i - 1];
        const double ur = i == n ? g.u[n - 1] : g.u[i];
        F[i] = godunov_flux(flux, ul, ur);
    }
    const double r = dt / g.dx;
    for (std::size_t i = 0; i < n; ++i)
        g.u[i] = detail::snap_to_domain(flux, g.u[i] - r * (F[i + 1] - F[i]));
    if (sourced) detail::fv_source_half(g, *opt.source, 0.5 * dt, opt.rk_substeps);
    g.t += dt;
}

// March to t_end under the CFL condition (recomputed every step).
inline FVGrid godunov_solve(const FluxModel& flux, const InitialCondition& ic, double t_end,
                            const GodunovOptions& opt = {}) {
    if (!(t_end >= 0) || !std::isfinite(t_end))
        throw ReferenceError("godunov_solve: t_end must be finite and non-negative");
    if (!(opt.cfl > 0) || opt.cfl > 1)
        throw ReferenceError("godunov_solve: cfl must be in (0, 1]");
    FVGrid g = fv_initialize(flux, ic, opt);
    std::size_t steps = 0;
    while (g.t < t_end) {
        const double smax = max_wave_speed(flux, g.u);
        double dt = smax > 0 ? opt.cfl * g.dx / smax : t_end - g.t;
        if (dt > opt.dt_cap) dt = opt.dt_cap;
        const double remaining = t_end - g.t;
        if (dt >= remaining) {
            fv_step(flux, g, remaining, opt);
            g.t = t_end;
            break;
        }
        fv_step(flux, g, dt, opt);
        if (++steps > opt.max_steps) throw ReferenceError("godunov_solve: step budget exceeded");
    }
    return g;
}

// Piecewise-constant staircase (the honest graph of cell averages), or the
// cell-center polyline (endpoints extended to the grid faces) when staircase
// is false.
inline Polyline to_polyline(const FVGrid& g, bool staircase = true) {
    Polyline p;
    const std::size_t n = g.u.size();
    if (n == 0) throw ReferenceError("to_polyline: empty grid");
    if (staircase) {
        p.pts.reserve(2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            p.pts.push_back({g.face(i), g.u[i], static_cast<int>(i), i > 0});
            p.pts.push_back({g.face(i + 1), g.u[i], static_cast<int>(i), false});
        }
    } else {
        p.pts.reserve(n + 2);
        p.pts.push_back({g.x_lo, g.u[0], 0, false});
        for (std::size_t i = 0; i < n; ++i)
            p.pts.push_back({g.center(i), g.u[i], static_cast<int>(i), false});
        p.pts.push_back({g.x_hi(), g.u[n - 1], static_cast<int>(n - 1), false});
    }
    return p;
}

} // namespace raretrack
