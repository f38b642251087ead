#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace raretrack {

class RootError : public std::runtime_error {
public:
    explicit RootError(const std::string& what) : std::runtime_error(what) {}
};

struct RootResult {
    double x = 0.0;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Safeguarded Newton: iterate from x0 inside [lo, hi]; a step that leaves the bracket
// or fails to shrink the interval falls back to bisection. fdf(x) returns
// {residual, derivative}; convergence is |residual| <= tol_f.
// The bracket must enclose a sign change (checked) unless an endpoint already meets
// tol_f.
template <class FDF>
RootResult newton_bisection(FDF&& fdf, double lo, double hi, double x0, double tol_f,
                            int max_iter = 100) {
    if (!(lo <= hi)) throw RootError("newton_bisection: empty bracket");
    auto [flo, unused_lo] = fdf(lo);
    auto [fhi, unused_hi] = fdf(hi);
    (void)unused_lo;
    (void)unused_hi;
    if (std::abs(flo) <= tol_f) return {lo, flo, 0, true};
    if (std::abs(fhi) <= tol_f) return {hi, fhi, 0, true};
    if ((flo > 0) == (fhi > 0))
        throw RootError("newton_bisection: no sign change over bracket");

    double x = (x0 >= lo && x0 <= hi) ? x0 : 0.5 * (lo + hi);
    for (int it = 1; it <= max_iter; ++it) {
        auto [fx, dfx] = fdf(x);
        if (std::abs(fx) <= tol_f) return {x, fx, it, true};
        if ((fx > 0) == (flo > 0)) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
        double step_x = (dfx != 0.0 && std::isfinite(dfx)) ? x - fx / dfx
                                                           : std::numeric_limits<double>::quiet_NaN();
        // Reject Newton steps that leave the bracket or stagnate; bisect instead.
        if (!(step_x > lo && step_x < hi)) step_x = 0.5 * (lo + hi);
        x = step_x;
        if (hi - lo <= 4 * std::numeric_limits<double>::epsilon() *
                           (std::abs(lo) + std::abs(hi) + 1.0)) {
            // The sign change is boxed into an interval of machine width: x is
            // determined as precisely as the arithmetic allows, even when the
            // residual cannot reach tol_f (ill-conditioned near the root).
            auto [fm, dm] = fdf(x);
            (void)dm;
            return {x, fm, it, true};
        }
    }
    auto [fx, dfx] = fdf(x);
    (void)dfx;
    return {x, fx, max_iter, std::abs(fx) <= tol_f};
}

} // namespace raretrack
