#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

#include "raretrack/expr.hpp"
#include "raretrack/front.hpp"

namespace raretrack {

class SourceError : public std::runtime_error {
public:
    explicit SourceError(const std::string& what) : std::runtime_error(what) {}
};

// Right-hand side g(x,u) of the balance law u_t + f(u)_x = g(x,u).
class SourceModel {
public:
    SourceModel() = default;
    SourceModel(std::string id, std::function<double(double, double)> g)
        : id_(std::move(id)), g_(std::move(g)) {}

    bool empty() const { return !g_; }
    double g(double x, double u) const {
        if (!g_) throw SourceError("empty source model");
        return g_(x, u);
    }
    const std::string& id() const { return id_; }

    // When g models transport over a bottom profile, g(x,u) = b'(x) u and b is
    // exposed for diagnostics (u - b is invariant along characteristics).
    bool has_bottom() const { return static_cast<bool>(b_); }
    double bottom(double x) const {
        if (!b_) throw SourceError("source has no bottom profile");
        return b_(x);
    }
    void set_bottom(std::function<double(double)> b) { b_ = std::move(b); }

private:
    std::string id_;
    std::function<double(double, double)> g_;
    std::function<double(double)> b_;
};

// g(x,u) = b'(x) u with b(x) = amplitude * cos(pi x) on [x_lo, x_hi], 0 outside.
// The endpoints must be half-integers so b is continuous there; b' takes its
// one-sided interior values at the edges.
inline SourceModel make_bottom_profile_source(double x_lo = 4.5, double x_hi = 5.5,
                                              double amplitude = 1.0) {
    if (!(x_lo < x_hi)) throw SourceError("bottom profile requires x_lo < x_hi");
    const double pi = 3.14159265358979323846;
    if (std::abs(std::cos(pi * x_lo)) > 1e-9 || std::abs(std::cos(pi * x_hi)) > 1e-9)
        throw SourceError("bottom profile endpoints must be half-integers so the profile is "
                          "continuous");
    auto db = [=](double x) {
        if (x < x_lo || x > x_hi) return 0.0;
        return -amplitude * pi * std::sin(pi * x);
    };
    SourceModel m("bottom_profile", [db](double x, double u) { return db(x) * u; });
    m.set_bottom([=](double x) {
        if (x < x_lo || x > x_hi) return 0.0;
        return amplitude * std::cos(pi * x);
    });
    return m;
}

// g(x,u) parsed from an expression in x and u.
inline SourceModel make_expr_source(const std::string& expr) {
    Expression e = Expression::parse(expr);
    return SourceModel("expr", [e](double x, double u) { return e(x, u); });
}

// Classical RK4 on the coupled per-particle system
//   dx/dt = f'(u),   du/dt = g(x,u),
// taken in `substeps` equal substeps. Cached speeds are refreshed from the final
// values and the front time advances by dt. Unlike conservative transport this
// evaluates the flux derivative O(substeps) times per particle.
inline void advance_with_source(ParticleFront& front, const SourceModel& src, double dt,
                                int substeps) {
    if (dt < 0) throw SourceError("advance_with_source: negative dt");
    if (substeps < 1) throw SourceError("advance_with_source: substeps must be >= 1");
    if (!front.flux().inflections().empty())
        throw SourceError("source stepping with inflection-carrying fluxes is unsupported "
                          "(particle values change, invalidating inflection tracking)");
    if (dt == 0) return;
    const FluxModel& flux = front.flux();
    const double h = dt / substeps;
    for (auto& p : front.particles()) {
        double x = p.x, u = p.u;
        for (int k = 0; k < substeps; ++k) {
            const double k1x = flux.df(u), k1u = src.g(x, u);
            const double k2x = flux.df(u + 0.5 * h * k1u);
            const double k2u = src.g(x + 0.5 * h * k1x, u + 0.5 * h * k1u);
            const double k3x = flux.df(u + 0.5 * h * k2u);
            const double k3u = src.g(x + 0.5 * h * k2x, u + 0.5 * h * k2u);
            const double k4x = flux.df(u + h * k3u);
            const double k4u = src.g(x + h * k3x, u + h * k3u);
            x += h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
            u += h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u);
        }
        p.x = x;
        p.u = u;
        p.speed = flux.df(u);
    }
    front.set_time(front.time() + dt);
}

// Step size for sourced runs: the collision horizon computed from frozen speeds is
// only a linearized estimate once u evolves, so it is capped by dt_cap.
inline double next_event_source(const ParticleFront& front, double dt_cap) {
    if (!(dt_cap > 0) || !std::isfinite(dt_cap))
        throw SourceError("next_event_source: dt_cap must be positive and finite");
    return std::min(front.next_event(), dt_cap);
}

} // namespace raretrack
