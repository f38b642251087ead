#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "raretrack/flux.hpp"

namespace raretrack {

class WaveError : public std::runtime_error {
public:
    explicit WaveError(const std::string& what) : std::runtime_error(what) {}
};

// Relative/absolute threshold below which f'(u1) and f'(u2) are considered equal
// and averages fall back to the midpoint (removable singularity).
inline constexpr double kDegenerateEps = 1e-13;

inline bool speeds_degenerate(double dfu1, double dfu2) {
    return std::abs(dfu2 - dfu1) < kDegenerateEps * (std::abs(dfu1) + std::abs(dfu2)) +
                                       kDegenerateEps;
}

// Similarity-wave interpolant between particles (x1,u1) and (x2,u2):
//   x(u) = x1 + (f'(u) - f'(u1)) / (f'(u2) - f'(u1)) * (x2 - x1)
// Exact for simple waves; requires u strictly between-or-at the endpoint values and
// f convex or concave over the value interval (no inflection strictly inside).
// When f' is numerically equal at the endpoints the formula is 0/0; the segment
// carries no wave structure and we fall back to linear interpolation in u.
inline double interpolate(const FluxModel& flux, double x1, double u1, double x2, double u2,
                          double u) {
    const double lo = u1 < u2 ? u1 : u2, hi = u1 < u2 ? u2 : u1;
    if (!(u >= lo && u <= hi))
        throw WaveError("interpolate: u outside segment value interval");
    if (u1 == u2) {
        if (u == u1) return x1;
        throw WaveError("interpolate: degenerate segment (u1 == u2)");
    }
    if (flux.spans_inflection(u1, u2))
        throw WaveError("interpolate: segment value interval spans an inflection");
    const double d1 = flux.df(u1), d2 = flux.df(u2);
    if (speeds_degenerate(d1, d2))
        return x1 + (u - u1) / (u2 - u1) * (x2 - x1);
    return x1 + (flux.df(u) - d1) / (d2 - d1) * (x2 - x1);
}

// Nonlinear average of a similarity wave:
//   a(u1,u2) = [F]_{u1}^{u2} / [f']_{u1}^{u2},  F(u) = f'(u) u - f(u)
// equal to the f''-weighted mean of u over [u1,u2]; midpoint when f' is (numerically)
// equal at the endpoints. For quadratic fluxes this is the arithmetic mean.
inline double average(const FluxModel& flux, double u1, double u2) {
    if (u1 == u2) return u1;
    if (flux.quadratic()) return 0.5 * (u1 + u2);
    const double d1 = flux.df(u1), d2 = flux.df(u2);
    if (speeds_degenerate(d1, d2)) return 0.5 * (u1 + u2);
    const double a = (flux.legendre(u2) - flux.legendre(u1)) / (d2 - d1);
    const double lo = u1 < u2 ? u1 : u2, hi = u1 < u2 ? u2 : u1;
    if (a >= lo && a <= hi) return a;
    // The exact value is an f''-weighted mean of u, confined to [u1,u2] wherever
    // f'' keeps one sign; landing outside is cancellation between the two
    // near-equal differences, and the midpoint is then accurate to O((u2-u1)^2).
    // Across an inflection the weights genuinely mix signs, so keep the ratio.
    if (flux.spans_inflection(u1, u2)) return a;
    return 0.5 * (u1 + u2);
}

// Area under the interpolant between two particles: (x2 - x1) * a(u1, u2).
inline double segment_area(const FluxModel& flux, double x1, double u1, double x2, double u2) {
    return (x2 - x1) * average(flux, u1, u2);
}

// Time until the particles collide under characteristic motion:
//   dt = -(x2 - x1) / (f'(u2) - f'(u1))
// std::nullopt if the pair never collides (departing or parallel). Zero exactly when
// the particles are stacked and compressive. Uses supplied speeds (no flux evals).
inline std::optional<double> collision_time_from_speeds(double x1, double s1, double x2,
                                                        double s2) {
    const double closing = s2 - s1;
    const double gap = x2 - x1;
    if (closing >= 0.0) {
        // Not compressive: collides only if already overtaken (handled by caller).
        return std::nullopt;
    }
    if (gap <= 0.0) return 0.0;
    return -gap / closing;
}

inline std::optional<double> collision_time(const FluxModel& flux, double x1, double u1,
                                            double x2, double u2) {
    return collision_time_from_speeds(x1, flux.df(u1), x2, flux.df(u2));
}

} // namespace raretrack
