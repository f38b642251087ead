#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "raretrack/front.hpp"
#include "raretrack/wave.hpp"

namespace raretrack {

class PostprocessError : public std::runtime_error {
public:
    explicit PostprocessError(const std::string& what) : std::runtime_error(what) {}
};

struct PolylinePoint {
    double x = 0, u = 0;
    int segment_id = 0;
    bool is_jump = false;
};

// Parametric graph (x non-decreasing; vertical jumps as repeated x).
struct Polyline {
    std::vector<PolylinePoint> pts;
    double x_begin() const { return pts.empty() ? 0 : pts.front().x; }
    double x_end() const { return pts.empty() ? 0 : pts.back().x; }
};

// Dense sampling of the front's interpolant: each non-trivial segment contributes
// samples_per_segment sub-intervals at equispaced u-values (x from the closed-form
// interpolant, so vertical tangents at inflection particles are captured exactly);
// constant and zero-width segments contribute endpoints only. Diagnostic: does not
// count flux evaluations.
inline Polyline evaluate(const ParticleFront& front, int samples_per_segment = 8) {
    if (samples_per_segment < 1)
        throw PostprocessError("evaluate: samples_per_segment must be >= 1");
    FluxModel::CounterPause pause(front.flux());
    Polyline out;
    const auto& p = front.particles();
    if (p.empty()) return out;
    auto push = [&](double x, double u, int seg, bool jump) {
        if (!out.pts.empty()) {
            const auto& b = out.pts.back();
            if (b.x == x && b.u == u) return; // shared segment endpoint
        }
        out.pts.push_back({x, u, seg, jump});
    };
    push(p[0].x, p[0].u, 0, false);
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        const double x1 = p[i].x, u1 = p[i].u, x2 = p[i + 1].x, u2 = p[i + 1].u;
        const int seg = static_cast<int>(i);
        const bool jump = x1 == x2 && u1 != u2;
        if (jump) {
            if (!out.pts.empty() && out.pts.back().x == x1 && out.pts.back().u == u1)
                out.pts.back().is_jump = true;
            push(x1, u1, seg, true);
            push(x2, u2, seg, true);
            continue;
        }
        if (u1 == u2 || x1 == x2) {
            push(x2, u2, seg, false);
            continue;
        }
        const double s1 = front.flux().df(u1), s2 = front.flux().df(u2);
        const bool degenerate = speeds_degenerate(s1, s2);
        for (int j = 1; j <= samples_per_segment; ++j) {
            const double u = u1 + (u2 - u1) * j / samples_per_segment;
            double x;
            if (j == samples_per_segment) {
                x = x2;
            } else if (degenerate) {
                x = x1 + (x2 - x1) * j / samples_per_segment;
            } else {
                x = interpolate(front.flux(), x1, u1, x2, u2, u);
            }
            push(x, u, seg, false);
        }
    }
    return out;
}

// Copy of the front with every interior shock-role particle replaced by an
// area-equivalent discontinuity: (x2,u2) with neighbours (x1,u1),(x3,u3) becomes
// the stacked pair (xbar,u1),(xbar,u3), where the affine area balance
//   (xbar-x1) u1 + (x3-xbar) u3 = area over [x1,x3]
// gives xbar = (A + x1 u1 - x3 u3)/(u1 - u3). A boundary shock uses a constant
// extension at distance d_max as the missing neighbour. Shocks between equal
// flanking values (u1 == u3) are left as they are. Diagnostic: does not count
// flux evaluations.
inline ParticleFront sharpen_shocks(const ParticleFront& front) {
    ParticleFront out = front;
    FluxModel::CounterPause pause(out.flux());
    auto& p = out.particles();
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i].role != Role::shock) continue;
        const double x2 = p[i].x, u2 = p[i].u;
        double x1, u1, x3, u3;
        if (i == 0) {
            x1 = x2 - out.d_max();
            u1 = u2;
        } else {
            x1 = p[i - 1].x;
            u1 = p[i - 1].u;
        }
        if (i + 1 >= p.size()) {
            x3 = x2 + out.d_max();
            u3 = u2;
        } else {
            x3 = p[i + 1].x;
            u3 = p[i + 1].u;
        }
        if (u1 == u3) continue;
        const double area = segment_area(out.flux(), x1, u1, x2, u2) +
                            segment_area(out.flux(), x2, u2, x3, u3);
        double xbar = (area + x1 * u1 - x3 * u3) / (u1 - u3);
        const double slop = 1e-9 * (x3 - x1);
        if (xbar < x1 - slop || xbar > x3 + slop) continue; // guarded: cannot occur for
                                                            // admissible shocks
        xbar = std::clamp(xbar, x1, x3);
        Particle left = out.make_particle(xbar, u1, Role::shock);
        Particle right = out.make_particle(xbar, u3, Role::shock);
        p[i] = left;
        p.insert(p.begin() + static_cast<std::ptrdiff_t>(i) + 1, right);
        ++i; // skip the pair just written
    }
    return out;
}

namespace detail {

// Breakpoints with one-sided values: between breakpoints the graph is linear from
// ur[i] to ul[i+1]; repeated x in the input becomes a jump (ul = first, ur = last).
struct GraphBreaks {
    std::vector<double> x;
    std::vector<double> ul, ur;

    static GraphBreaks build(const Polyline& p) {
        if (p.pts.size() < 2)
            throw PostprocessError("l1_distance: polyline needs at least two points");
        GraphBreaks g;
        for (std::size_t i = 0; i < p.pts.size(); ++i) {
            const double x = p.pts[i].x, u = p.pts[i].u;
            if (!g.x.empty() && x < g.x.back())
                throw PostprocessError("l1_distance: polyline is not a graph (x decreases)");
            if (!g.x.empty() && x == g.x.back()) {
                g.ur.back() = u; // extend the jump
            } else {
                g.x.push_back(x);
                g.ul.push_back(u);
                g.ur.push_back(u);
            }
        }
        return g;
    }

    // One-sided value at x (from_right: limit x+; else limit x-). x must be inside
    // [x.front(), x.back()].
    double value(double xq, bool from_right) const {
        const auto it = std::upper_bound(x.begin(), x.end(), xq);
        std::size_t i = static_cast<std::size_t>(it - x.begin());
        if (i > 0 && x[i - 1] == xq) return from_right ? ur[i - 1] : ul[i - 1];
        // strictly between breakpoints i-1 and i
        if (i == 0 || i >= x.size())
            throw PostprocessError("l1_distance: query outside polyline range");
        const double x0 = x[i - 1], x1 = x[i];
        const double v0 = ur[i - 1], v1 = ul[i];
        return v0 + (v1 - v0) * (xq - x0) / (x1 - x0);
    }
};

} // namespace detail

// Exact integral of |A(x) - B(x)| over the overlap of the two graphs (optionally
// clipped to [clip_lo, clip_hi]). Both graphs are piecewise linear with jumps; the
// integrand is integrated in closed form on the union grid, splitting intervals at
// sign changes, so the only error is floating-point rounding.
inline double l1_distance(const Polyline& A, const Polyline& B,
                          double clip_lo = -std::numeric_limits<double>::infinity(),
                          double clip_hi = std::numeric_limits<double>::infinity()) {
    const detail::GraphBreaks ga = detail::GraphBreaks::build(A);
    const detail::GraphBreaks gb = detail::GraphBreaks::build(B);
    const double lo = std::max({ga.x.front(), gb.x.front(), clip_lo});
    const double hi = std::min({ga.x.back(), gb.x.back(), clip_hi});
    if (!(hi > lo)) throw PostprocessError("l1_distance: graphs do not overlap");

    std::vector<double> grid;
    grid.reserve(ga.x.size() + gb.x.size() + 2);
    grid.push_back(lo);
    for (double v : ga.x)
        if (v > lo && v < hi) grid.push_back(v);
    for (double v : gb.x)
        if (v > lo && v < hi) grid.push_back(v);
    grid.push_back(hi);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    double total = 0;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double a = grid[k], b = grid[k + 1], w = b - a;
        if (w <= 0) continue;
        const double d0 = ga.value(a, true) - gb.value(a, true);
        const double d1 = ga.value(b, false) - gb.value(b, false);
        if (d0 * d1 >= 0) {
            total += 0.5 * (std::abs(d0) + std::abs(d1)) * w;
        } else {
            // linear difference crosses zero inside: two triangles
            total += 0.5 * w * (d0 * d0 + d1 * d1) / std::abs(d0 - d1);
        }
    }
    return total;
}

// Kruzkov entropy integral of a graph polyline: the piecewise-linear integrand
// |u - k| is integrated in closed form per interval, splitting at crossings of
// the level k; jumps contribute nothing (zero width).
inline double kruzkov_entropy(const Polyline& P, double k) {
    double total = 0;
    for (std::size_t i = 0; i + 1 < P.pts.size(); ++i) {
        const double w = P.pts[i + 1].x - P.pts[i].x;
        if (w <= 0) continue;
        const double d0 = P.pts[i].u - k, d1 = P.pts[i + 1].u - k;
        if (d0 * d1 >= 0)
            total += 0.5 * (std::abs(d0) + std::abs(d1)) * w;
        else
            total += 0.5 * w * (d0 * d0 + d1 * d1) / std::abs(d0 - d1);
    }
    return total;
}

// Copy of P whose graph is extended by constants to cover [lo, hi]; no-op on a
// side it already covers.
inline Polyline extended(Polyline P, double lo, double hi) {
    if (P.pts.empty()) throw PostprocessError("extended: empty polyline");
    if (P.pts.front().x > lo)
        P.pts.insert(P.pts.begin(), {lo, P.pts.front().u, P.pts.front().segment_id, false});
    if (P.pts.back().x < hi)
        P.pts.push_back({hi, P.pts.back().u, P.pts.back().segment_id, false});
    return P;
}

// L1 distance over the union of the two x-ranges, extending each graph by its
// end values: right for solutions that are constant in their far fields.
inline double l1_union(const Polyline& A, const Polyline& B) {
    if (A.pts.empty() || B.pts.empty()) throw PostprocessError("l1_union: empty polyline");
    const double lo = std::min(A.x_begin(), B.x_begin());
    const double hi = std::max(A.x_end(), B.x_end());
    return l1_distance(extended(A, lo, hi), extended(B, lo, hi));
}

} // namespace raretrack
