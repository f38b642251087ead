#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "raretrack/front.hpp"
#include "raretrack/root.hpp"
#include "raretrack/wave.hpp"

namespace raretrack {

class ManagementError : public std::runtime_error {
public:
    explicit ManagementError(const std::string& what) : std::runtime_error(what) {}
};

enum class EventKind : int {
    step = 0,         // one characteristic transport step
    insert,           // gap-filling insertion on the interpolant
    merge,            // standard area-conserving merge of a compressive pair
    inflection_merge, // merge next to an inflection particle (strategies 1-3)
    entropy_insert,   // insertion performed by the entropy fix
    dedupe,           // removal of interior particles of a stacked run
    normalize,        // repair of a floating-point / source-step overtake
    output            // snapshot emitted
};

inline const char* event_kind_name(EventKind k) {
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
    return "?";
}

// One management / stepping event. area_delta and tv_delta are the exact local
// changes over the touched window (window ends are never moved by an event), so
// they equal the global changes. entropy_delta is the largest increase of
// int |u-k| dx over the tracked k-levels (merges only, when tracking is on).
struct EventRecord {
    double t = 0;
    EventKind kind = EventKind::step;
    double x = 0;
    double area_delta = 0;
    double tv_delta = 0;
    double entropy_delta = 0;
    std::uint64_t id_a = 0, id_b = 0, id_result = 0;
    std::uint8_t role_a = 0, role_b = 0;
    int detail = 0; // merges: entropy retries; inflection merges: strategy index
    std::size_t n_after = 0;
    double dt = 0; // step events only
};

using EventSink = std::function<void(const EventRecord&)>;

struct ManageOptions {
    // Pairs closer than this (and compressive) are merged. Callers use
    // max(d_min, front.overtake_tol()).
    double trigger_gap = 0;
    // How far out of order a pair may be before it is an error instead of a
    // normalize event. Conservative runs: front.overtake_tol(); source runs: larger.
    double overtake_allowance = 0;
    int entropy_retry_cap = 16;
    bool track_entropy = true;
    int entropy_levels = 9;
};

// ---------------------------------------------------------------------------
// Exact |u-k| integral over the interpolant of a particle range [first, last).
// Segments crossing the level are split at the crossing position (closed form
// via the interpolant; linear fallback when f' is degenerate across the segment).
// Diagnostic: does not count flux evaluations.
inline double kruzkov_entropy(const FluxModel& flux, const Particle* first, const Particle* last,
                              double k) {
    if (first == last) return 0.0;
    FluxModel::CounterPause pause(flux);
    double total = 0.0;
    for (const Particle* p = first; p + 1 != last; ++p) {
        const double x1 = p->x, u1 = p->u, x2 = (p + 1)->x, u2 = (p + 1)->u;
        if ((u1 - k) * (u2 - k) >= 0.0) {
            total += std::abs(segment_area(flux, x1, u1, x2, u2) - k * (x2 - x1));
            continue;
        }
        double xc;
        try {
            xc = interpolate(flux, x1, u1, x2, u2, k);
        } catch (const WaveError&) {
            xc = x1 + (k - u1) / (u2 - u1) * (x2 - x1);
        }
        total += std::abs(segment_area(flux, x1, u1, xc, k) - k * (xc - x1));
        total += std::abs(segment_area(flux, xc, k, x2, u2) - k * (x2 - xc));
    }
    return total;
}

inline double kruzkov_entropy(const ParticleFront& front, double k) {
    const auto& ps = front.particles();
    return kruzkov_entropy(front.flux(), ps.data(), ps.data() + ps.size(), k);
}

// ---------------------------------------------------------------------------
// Derivative of the nonlinear average in its second argument:
//   d/du2 a(u1,u2) = f''(u2) (u2 - a(u1,u2)) / (f'(u2) - f'(u1)),
// with limit 1/2 as u2 -> u1 (and exactly 1/2 for quadratic fluxes).
inline double davg_du2(const FluxModel& flux, double u1, double u2) {
    if (u1 == u2 || flux.quadratic()) return 0.5;
    const double d1 = flux.df(u1), d2 = flux.df(u2);
    if (speeds_degenerate(d1, d2)) return 0.5;
    const double a = average(flux, u1, u2);
    return flux.ddf(u2) * (u2 - a) / (d2 - d1);
}
inline double davg_du1(const FluxModel& flux, double u1, double u2) {
    return davg_du2(flux, u2, u1);
}

// ---------------------------------------------------------------------------
// Value of a particle inserted at position x inside the segment (xa,ua)-(xb,ub)
// so that the two sub-areas sum exactly to the original area:
//   (x-xa) a(ua,u) + (xb-x) a(u,ub) = (xb-xa) a(ua,ub).
// By the refinement identity the solution lies on the interpolant. Closed form for
// quadratic fluxes; safeguarded Newton in [min(ua,ub), max(ua,ub)] otherwise.
inline double insert_value(const FluxModel& flux, double xa, double ua, double xb, double ub,
                           double x) {
    if (!(xb > xa)) throw ManagementError("insert_value: requires xa < xb");
    if (!(x >= xa && x <= xb)) throw ManagementError("insert_value: x outside segment");
    if (ua == ub) return ua;
    if (flux.spans_inflection(ua, ub))
        throw ManagementError("insert_value: segment spans an inflection value");
    const double w = xb - xa;
    if (flux.quadratic()) return ((ua + ub) * w - (x - xa) * ua - (xb - x) * ub) / w;

    const double target = w * average(flux, ua, ub);
    const double lo = std::min(ua, ub), hi = std::max(ua, ub);
    const double vscale = std::max({1.0, std::abs(ua), std::abs(ub)});
    const double tol = 1e-12 * (std::abs(target) + w * vscale);
    auto fdf = [&](double u) {
        const double r =
            (x - xa) * average(flux, ua, u) + (xb - x) * average(flux, u, ub) - target;
        const double dr = (x - xa) * davg_du2(flux, ua, u) + (xb - x) * davg_du1(flux, u, ub);
        return std::pair<double, double>(r, dr);
    };
    const double guess = ua + (x - xa) / w * (ub - ua);
    const double rlo = fdf(lo).first, rhi = fdf(hi).first;
    if ((rlo > 0) == (rhi > 0)) {
        // In exact arithmetic the endpoint residuals have opposite signs; if
        // rounding makes them agree, both sit at noise level (the segment is too
        // short for the area equation to resolve) and either endpoint is the
        // area-exact answer to within that noise.
        if (std::abs(rlo) <= 1024 * tol && std::abs(rhi) <= 1024 * tol)
            return std::abs(rlo) <= std::abs(rhi) ? lo : hi;
        throw ManagementError("insert_value: area equation endpoints do not bracket");
    }
    RootResult res = newton_bisection(fdf, lo, hi, guess, tol);
    if (!res.converged)
        throw ManagementError("insert_value: area equation did not converge");
    return res.x;
}

// ---------------------------------------------------------------------------
// Merging context: the compressive pair (x2,u2),(x3,u3) plus flanking particles.
// Normally x1 < x2 <= x3 < x4; a slightly overtaken pair (x3 < x2 by a step slop)
// is accepted and handled by the same equations.
struct MergeContext {
    double x1, u1, x2, u2, x3, u3, x4, u4;
};

// Solve the area condition for the merged value u23 at x23 = (x2+x3)/2:
//   (x23-x1) a(u1,u23) + (x4-x23) a(u23,u4)
//     = (x2-x1) a(u1,u2) + (x3-x2) a(u2,u3) + (x4-x3) a(u3,u4).
// u23 lies in [min(u2,u3), max(u2,u3)]; closed form for quadratic fluxes.
inline double merge_value(const FluxModel& flux, const MergeContext& c) {
    if (c.u2 == c.u3) throw ManagementError("merge_value: pair values equal");
    if (flux.spans_inflection(c.u2, c.u3))
        throw ManagementError("merge_value: compressive pair brackets an inflection value; "
                              "an inflection particle is required");
    const double x23 = 0.5 * (c.x2 + c.x3);
    if (!(c.x4 > c.x1)) throw ManagementError("merge_value: empty window");
    const double rhs = (c.x2 - c.x1) * average(flux, c.u1, c.u2) +
                       (c.x3 - c.x2) * average(flux, c.u2, c.u3) +
                       (c.x4 - c.x3) * average(flux, c.u3, c.u4);
    const double lo = std::min(c.u2, c.u3), hi = std::max(c.u2, c.u3);
    if (flux.quadratic()) {
        const double u =
            (2.0 * rhs - (x23 - c.x1) * c.u1 - (c.x4 - x23) * c.u4) / (c.x4 - c.x1);
        return std::clamp(u, lo, hi);
    }
    const double vscale =
        std::max({1.0, std::abs(c.u1), std::abs(c.u2), std::abs(c.u3), std::abs(c.u4)});
    const double tol = 1e-12 * (std::abs(rhs) + (c.x4 - c.x1) * vscale);
    auto fdf = [&](double u) {
        const double r = (x23 - c.x1) * average(flux, c.u1, u) +
                         (c.x4 - x23) * average(flux, u, c.u4) - rhs;
        const double dr =
            (x23 - c.x1) * davg_du2(flux, c.u1, u) + (c.x4 - x23) * davg_du1(flux, u, c.u4);
        return std::pair<double, double>(r, dr);
    };
    // The residual is non-decreasing in u (averages grow with their endpoints), so
    // a root beyond the admissible interval clamps to the nearer endpoint — the
    // same absorb semantics the quadratic closed form gets from std::clamp.
    if (fdf(lo).first >= 0) return lo;
    if (fdf(hi).first <= 0) return hi;
    RootResult res = newton_bisection(fdf, lo, hi, 0.5 * (c.u2 + c.u3), tol);
    if (!res.converged) throw ManagementError("merge_value: area equation did not converge");
    return res.x;
}

// Shock admissibility of a merged value against the flanking values:
// u1 >= u23 >= u4 where f is convex over the pair's value interval, reversed where
// concave (flat passes trivially). Small relative slack absorbs solver residuals.
struct EntropyVerdict {
    bool left = true, right = true;
    bool pass() const { return left && right; }
};

inline EntropyVerdict entropy_check(const FluxModel& flux, const MergeContext& c, double u23) {
    const ConvexitySign cs = convexity_sign(flux, c.u2, c.u3);
    if (cs == ConvexitySign::mixed)
        throw ManagementError("entropy_check: pair value interval spans an inflection");
    if (cs == ConvexitySign::flat) return {true, true};
    const double eps =
        1e-13 * std::max({1.0, std::abs(c.u1), std::abs(u23), std::abs(c.u4)});
    EntropyVerdict v;
    if (cs == ConvexitySign::convex) {
        v.left = c.u1 >= u23 - eps;
        v.right = u23 >= c.u4 - eps;
    } else {
        v.left = c.u1 <= u23 + eps;
        v.right = u23 <= c.u4 + eps;
    }
    return v;
}

// ---------------------------------------------------------------------------
// Management driver: normalizes overtakes, dedupes stacked runs, fills gaps and
// merges compressive pairs (entropy fix and inflection strategies included) until
// the front is stable. Every structural change is reported to the sink.
class Manager {
public:
    Manager(ParticleFront& front, const ManageOptions& opts, EventSink sink)
        : f_(front), o_(opts), sink_(std::move(sink)) {}

    void pass() {
        const std::size_t guard =
            64 + 32 * (f_.size() + 16) * (1 + static_cast<std::size_t>(o_.entropy_retry_cap));
        std::size_t rounds = 0;
        for (;;) {
            bool changed = false;
            changed |= normalize_overtaken();
            changed |= dedupe_all();
            changed |= fill_gaps();
            changed |= merge_sweep();
            if (!changed) break;
            if (++rounds > guard)
                throw ManagementError("management did not reach a stable front (guard hit)");
        }
    }

    std::size_t inserted_count() const { return inserted_; }

    // Literal stacked-run rule (standalone form): every run of three or more
    // particles at one position keeps only its min-u / max-u / inflection members,
    // monotone or not.
    bool dedupe_literal() {
        bool any = false;
        auto& p = ps();
        for (std::size_t i = 0; i + 1 < p.size();) {
            if (p[i + 1].x != p[i].x) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j + 1 < p.size() && p[j + 1].x == p[i].x) ++j;
            if (dedupe_run(i, j, /*monotone_too=*/true)) any = true;
            std::size_t k = i;
            while (k + 1 < p.size() && p[k + 1].x == p[i].x) ++k;
            i = k + 1;
        }
        return any;
    }

private:
    ParticleFront& f_;
    ManageOptions o_;
    EventSink sink_;
    std::size_t inserted_ = 0;

    std::vector<Particle>& ps() { return f_.particles(); }

    void emit(EventRecord&& r) {
        if (sink_) {
            r.t = f_.time();
            r.n_after = f_.size();
            sink_(r);
        }
    }

    // Area / TV over segments between particle indices [lo, hi] inclusive.
    double window_area(std::size_t lo, std::size_t hi) const {
        FluxModel::CounterPause pause(f_.flux());
        double a = 0;
        const auto& p = f_.particles();
        for (std::size_t i = lo; i < hi && i + 1 < p.size(); ++i)
            a += segment_area(f_.flux(), p[i].x, p[i].u, p[i + 1].x, p[i + 1].u);
        return a;
    }
    double window_tv(std::size_t lo, std::size_t hi) const {
        double tv = 0;
        const auto& p = f_.particles();
        for (std::size_t i = lo; i < hi && i + 1 < p.size(); ++i)
            tv += std::abs(p[i + 1].u - p[i].u);
        return tv;
    }
    void window_range(std::size_t lo, std::size_t hi, double& umin, double& umax) const {
        const auto& p = f_.particles();
        umin = std::numeric_limits<double>::infinity();
        umax = -umin;
        for (std::size_t i = lo; i <= hi && i < p.size(); ++i) {
            umin = std::min(umin, p[i].u);
            umax = std::max(umax, p[i].u);
        }
    }
    double window_entropy_max_delta(std::size_t lo, std::size_t hi, double umin, double umax,
                                    const std::vector<double>& before) const {
        // max increase over the tracked levels; 'before' holds the pre-op integrals.
        const auto& p = f_.particles();
        double worst = 0;
        for (int j = 0; j < o_.entropy_levels; ++j) {
            const double k =
                umin + (umax - umin) * j / std::max(1, o_.entropy_levels - 1);
            const double after =
                kruzkov_entropy(f_.flux(), p.data() + lo, p.data() + hi + 1, k);
            worst = std::max(worst, after - before[static_cast<std::size_t>(j)]);
        }
        return worst;
    }
    std::vector<double> window_entropy(std::size_t lo, std::size_t hi, double umin,
                                       double umax) const {
        const auto& p = f_.particles();
        std::vector<double> vals;
        vals.reserve(static_cast<std::size_t>(o_.entropy_levels));
        for (int j = 0; j < o_.entropy_levels; ++j) {
            const double k =
                umin + (umax - umin) * j / std::max(1, o_.entropy_levels - 1);
            vals.push_back(kruzkov_entropy(f_.flux(), p.data() + lo, p.data() + hi + 1, k));
        }
        return vals;
    }

    // --- overtake repair ----------------------------------------------------
    bool normalize_overtaken() {
        bool any = false;
        auto& p = ps();
        for (std::size_t i = 0; i + 1 < p.size(); ++i) {
            if (p[i + 1].x >= p[i].x) continue;
            const double gap = p[i].x - p[i + 1].x;
            if (gap > o_.overtake_allowance)
                throw ManagementError("front out of order beyond the overtake allowance (gap " +
                                      std::to_string(gap) + ")");
            const std::size_t lo = i > 0 ? i - 1 : 0;
            const std::size_t hi = std::min(i + 2, p.size() - 1);
            const double a0 = window_area(lo, hi);
            const double mid = 0.5 * (p[i].x + p[i + 1].x);
            p[i].x = mid;
            p[i + 1].x = mid;
            EventRecord r;
            r.kind = EventKind::normalize;
            r.x = mid;
            r.id_a = p[i].id;
            r.id_b = p[i + 1].id;
            r.area_delta = window_area(lo, hi) - a0;
            emit(std::move(r));
            any = true;
        }
        return any;
    }

    // --- stacked-run dedupe ---------------------------------------------------
    // Exact duplicates (same x and u) always collapse to one. A run of three or
    // more particles at one position keeps only its min-u and max-u members (plus
    // inflection particles) -- but only when the run is NOT monotone in u. A
    // monotone stacked run is a legitimate structure (a freshly sampled jump fan
    // or a multi-particle shock around an inflection): its compressive sub-pairs
    // collapse through area-conserving merges, which reach the same final value,
    // and its departing sub-pairs are rarefactions about to spread.
    bool dedupe_all() {
        bool any = false;
        auto& p = ps();
        for (std::size_t i = 0; i + 1 < p.size();) {
            if (p[i + 1].x != p[i].x) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j + 1 < p.size() && p[j + 1].x == p[i].x) ++j;
            if (dedupe_run(i, j, /*monotone_too=*/false)) any = true;
            // move past the (possibly shortened) run
            std::size_t k = i;
            while (k + 1 < p.size() && p[k + 1].x == p[i].x) ++k;
            i = k + 1;
        }
        return any;
    }

    bool dedupe_run(std::size_t i, std::size_t j, bool monotone_too) {
        auto& p = ps();
        bool any = false;
        // The run's first and last members anchor the segments that connect it to
        // its neighbours; removing one rewrites a finite-width segment's
        // interpolant, so an end member is only removable when the member inside
        // it carries the same value. Interior removals are area-exact (the run's
        // segments have zero width).
        // collapse exact duplicates, preferring the more structural role
        for (std::size_t a = i; a < j;) {
            bool removed = false;
            for (std::size_t b = a + 1; b <= j; ++b) {
                if (p[b].u == p[a].u) {
                    const bool a_ok = a > i || p[i + 1].u == p[i].u;
                    const bool b_ok = b < j || p[j - 1].u == p[j].u;
                    if (!a_ok && !b_ok) continue;
                    std::size_t victim =
                        static_cast<int>(p[a].role) >= static_cast<int>(p[b].role) ? b : a;
                    if (victim == b && !b_ok) victim = a;
                    if (victim == a && !a_ok) victim = b;
                    EventRecord r;
                    r.kind = EventKind::dedupe;
                    r.x = p[victim].x;
                    r.id_a = p[victim].id;
                    r.detail = 1; // duplicate collapse
                    p.erase(p.begin() + static_cast<std::ptrdiff_t>(victim));
                    emit(std::move(r));
                    --j;
                    any = true;
                    removed = true;
                    break;
                }
            }
            if (!removed) ++a;
        }
        if (j - i + 1 < 3) return any;
        if (!monotone_too) {
            bool increasing = true, decreasing = true;
            for (std::size_t a = i; a < j; ++a) {
                if (p[a + 1].u < p[a].u) increasing = false;
                if (p[a + 1].u > p[a].u) decreasing = false;
            }
            if (increasing || decreasing) return any;
        }
        // The standalone rule keeps min-u / max-u members; in the management pass
        // a non-monotone stacked run is a zero-width excursion with no area and no
        // content a weak solution can see, so everything between the anchoring
        // ends goes (total variation can only drop, and the survivors form a
        // plain jump the merge sweep handles).
        std::size_t imin = i, imax = i;
        if (monotone_too)
            for (std::size_t a = i; a <= j; ++a) {
                if (p[a].u < p[imin].u) imin = a;
                if (p[a].u > p[imax].u) imax = a;
            }
        for (std::size_t a = j + 1; a-- > i;) {
            if (a == i || a == j || a == imin || a == imax ||
                p[a].role == Role::inflection)
                continue;
            EventRecord r;
            r.kind = EventKind::dedupe;
            r.x = p[a].x;
            r.id_a = p[a].id;
            r.detail = 2; // interior of stacked run
            p.erase(p.begin() + static_cast<std::ptrdiff_t>(a));
            emit(std::move(r));
            any = true;
        }
        return any;
    }

    // --- gap filling ----------------------------------------------------------
    // Subdivide non-compressive pairs wider than d_max at the midpoint (recursively,
    // by rescanning the left half), so spacing lands in [d_max/2, d_max]. Compressive
    // pairs are left to collide; constant pairs subdivide at zero cost.
    bool fill_gaps() {
        bool any = false;
        auto& p = ps();
        const double dmax = f_.d_max() * (1.0 + 1e-12);
        for (std::size_t i = 0; i + 1 < p.size();) {
            const double gap = p[i + 1].x - p[i].x;
            const bool compressive = p[i].speed > p[i + 1].speed;
            if (compressive || gap <= dmax) {
                ++i;
                continue;
            }
            insert_mid(i);
            any = true; // rescan at i: the left half may still be too wide
        }
        return any;
    }

    // Insert the area-exact midpoint particle into segment (i, i+1).
    std::size_t insert_mid(std::size_t i, EventKind kind = EventKind::insert) {
        auto& p = ps();
        const double xa = p[i].x, ua = p[i].u, xb = p[i + 1].x, ub = p[i + 1].u;
        const double x = 0.5 * (xa + xb);
        const double u = insert_value(f_.flux(), xa, ua, xb, ub, x);
        const std::size_t lo = i, hi0 = i + 1;
        const double a0 = window_area(lo, hi0);
        const double tv0 = window_tv(lo, hi0);
        Particle np = f_.make_particle(x, u);
        p.insert(p.begin() + static_cast<std::ptrdiff_t>(i) + 1, np);
        ++inserted_;
        EventRecord r;
        r.kind = kind;
        r.x = x;
        r.id_result = np.id;
        r.id_a = p[i].id;
        r.id_b = p[i + 2].id;
        r.area_delta = window_area(lo, hi0 + 1) - a0;
        r.tv_delta = window_tv(lo, hi0 + 1) - tv0;
        emit(std::move(r));
        return i + 1;
    }

    // --- merging ----------------------------------------------------------------
    bool pair_eligible(std::size_t i) const {
        const auto& p = f_.particles();
        const double gap = p[i + 1].x - p[i].x;
        if (gap > std::max(o_.trigger_gap, f_.overtake_tol())) return false;
        return p[i].speed > p[i + 1].speed; // compressive
    }

    bool merge_sweep() {
        bool any = false;
        for (std::size_t i = 0; i + 1 < ps().size();) {
            if (!pair_eligible(i)) {
                ++i;
                continue;
            }
            if (ps()[i].role == Role::inflection || ps()[i + 1].role == Role::inflection)
                merge_at_inflection(i);
            else
                merge_pair(i);
            any = true;
            i = i >= 2 ? i - 2 : 0; // the new particle may collide with neighbours
        }
        return any;
    }

    MergeContext context_at(std::size_t i) const {
        const auto& p = f_.particles();
        MergeContext c;
        c.x2 = p[i].x;
        c.u2 = p[i].u;
        c.x3 = p[i + 1].x;
        c.u3 = p[i + 1].u;
        if (i == 0) {
            c.x1 = c.x2 - f_.d_max();
            c.u1 = c.u2;
        } else {
            c.x1 = p[i - 1].x;
            c.u1 = p[i - 1].u;
        }
        if (i + 2 >= p.size()) {
            c.x4 = c.x3 + f_.d_max();
            c.u4 = c.u3;
        } else {
            c.x4 = p[i + 2].x;
            c.u4 = p[i + 2].u;
        }
        return c;
    }

    // Standard merge with the entropy-fix loop. The pair is replaced by a single
    // shock-role particle at x23; failed admissibility inserts interpolant points
    // half-way toward the offending neighbour and retries with the tighter context.
    void merge_pair(std::size_t i) {
        auto& p = ps();
        int retries = 0;
        for (;;) {
            MergeContext c = context_at(i);
            const double u23 = merge_value(f_.flux(), c);
            const EntropyVerdict v = entropy_check(f_.flux(), c, u23);
            if (v.pass()) {
                apply_merge(i, c, u23, retries);
                return;
            }
            if (++retries > o_.entropy_retry_cap)
                throw ManagementError("entropy fix did not converge after " +
                                      std::to_string(o_.entropy_retry_cap) + " insertions");
            // Insert half-way between the shock and the offending neighbour. The
            // pair is (nearly) stacked, so the segment midpoint realizes that rule
            // and stays valid even for a slightly overtaken pair.
            if (!v.right) {
                if (i + 2 >= p.size())
                    throw ManagementError("entropy fix: failing side has no real neighbour");
                insert_at(i + 1, 0.5 * (c.x3 + c.x4), EventKind::entropy_insert);
            }
            if (!v.left) {
                if (i == 0)
                    throw ManagementError("entropy fix: failing side has no real neighbour");
                insert_at(i - 1, 0.5 * (c.x1 + c.x2), EventKind::entropy_insert);
                ++i; // the pair shifted right by the insertion
            }
        }
    }

    // Insert at arbitrary position x into segment (j, j+1) (entropy fix helper).
    // A zero-width segment is a jump; its "interpolant midpoint" is the value
    // midpoint at the same position (area- and TV-neutral by construction).
    void insert_at(std::size_t j, double x, EventKind kind) {
        auto& p = ps();
        const double xa = p[j].x, ua = p[j].u, xb = p[j + 1].x, ub = p[j + 1].u;
        const double u = (xb - xa <= f_.overtake_tol())
                             ? 0.5 * (ua + ub)
                             : insert_value(f_.flux(), xa, ua, xb, ub, x);
        const double a0 = window_area(j, j + 1);
        const double tv0 = window_tv(j, j + 1);
        Particle np = f_.make_particle(x, u);
        p.insert(p.begin() + static_cast<std::ptrdiff_t>(j) + 1, np);
        ++inserted_;
        EventRecord r;
        r.kind = kind;
        r.x = x;
        r.id_result = np.id;
        r.area_delta = window_area(j, j + 2) - a0;
        r.tv_delta = window_tv(j, j + 2) - tv0;
        emit(std::move(r));
    }

    void apply_merge(std::size_t i, const MergeContext& c, double u23, int retries) {
        auto& p = ps();
        const std::size_t lo = i > 0 ? i - 1 : 0;
        const std::size_t hi = std::min(i + 2, p.size() - 1);
        double umin = 0, umax = 0;
        std::vector<double> ent0;
        if (o_.track_entropy) {
            window_range(lo, hi, umin, umax);
            ent0 = window_entropy(lo, hi, umin, umax);
        }
        const double a0 = window_area(lo, hi);
        const double tv0 = window_tv(lo, hi);
        EventRecord r;
        r.kind = EventKind::merge;
        r.id_a = p[i].id;
        r.id_b = p[i + 1].id;
        r.role_a = static_cast<std::uint8_t>(p[i].role);
        r.role_b = static_cast<std::uint8_t>(p[i + 1].role);
        r.detail = retries;
        Particle np = f_.make_particle(0.5 * (c.x2 + c.x3), u23, Role::shock);
        p[i] = np;
        p.erase(p.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        const std::size_t hi2 = hi - 1;
        r.x = np.x;
        r.id_result = np.id;
        r.area_delta = window_area(lo, hi2) - a0;
        r.tv_delta = window_tv(lo, hi2) - tv0;
        if (o_.track_entropy)
            r.entropy_delta = window_entropy_max_delta(lo, hi2, umin, umax, ent0);
        emit(std::move(r));
    }

    // --- inflection merges -------------------------------------------------------
    // Canonical orientation: f''' > 0 at the inflection (the inflection particle is
    // the slowest), colliding pair (w2, w3) with w3 the inflection particle. The
    // mirrored orientation (f''' < 0, inflection catching its right neighbour) is
    // solved in reflected coordinates: positions negate and reverse; averages and
    // areas are invariant under the reflection.
    struct Window {
        double x[6], u[6]; // 1-based slots 1..5
        bool real[6];      // slot backed by an actual particle (vs phantom)
        std::size_t idx[6];
        bool mirrored = false;
    };

    void merge_at_inflection(std::size_t i) {
        auto& p = ps();
        const bool right_is_infl = p[i + 1].role == Role::inflection;
        const bool left_is_infl = p[i].role == Role::inflection;
        if (left_is_infl && right_is_infl)
            throw ManagementError("colliding inflection particles (multiple inflection "
                                  "interaction is unsupported)");
        const Particle& infl = right_is_infl ? p[i + 1] : p[i];
        // orientation must match the sign of f''' at the inflection
        int slope = 0;
        const auto& invals = f_.flux().inflections();
        for (std::size_t k = 0; k < invals.size(); ++k)
            if (invals[k] == infl.u) slope = f_.flux().inflection_slope_sign(k);
        if (slope == 0)
            throw ManagementError("inflection particle value has no cached slope sign");
        if (right_is_infl && slope != +1)
            throw ManagementError("inflection collision in unsupported orientation (expected "
                                  "f''' > 0 when the inflection is caught from the left)");
        if (left_is_infl && slope != -1)
            throw ManagementError("inflection collision in unsupported orientation (expected "
                                  "f''' < 0 when the inflection catches its right neighbour)");

        Window w;
        w.mirrored = left_is_infl;
        // canonical slots: [1]=i-1, [2]=i, [3]=i+1 (inflection), [4]=i+2, [5]=i+3
        // mirrored source slots: [q1]=i-2, [q2]=i-1, [q3]=i (inflection), [q4]=i+1, [q5]=i+2
        auto fetch = [&](std::ptrdiff_t j, double fallback_x, double fallback_u, int slot) {
            if (j >= 0 && j < static_cast<std::ptrdiff_t>(p.size())) {
                w.x[slot] = p[static_cast<std::size_t>(j)].x;
                w.u[slot] = p[static_cast<std::size_t>(j)].u;
                w.real[slot] = true;
                w.idx[slot] = static_cast<std::size_t>(j);
            } else {
                w.x[slot] = fallback_x;
                w.u[slot] = fallback_u;
                w.real[slot] = false;
                w.idx[slot] = static_cast<std::size_t>(-1);
            }
        };
        const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i);
        const double dmax = f_.d_max();
        if (!w.mirrored) {
            fetch(ii - 1, p[i].x - dmax, p[i].u, 1);
            fetch(ii, 0, 0, 2);
            fetch(ii + 1, 0, 0, 3);
            fetch(ii + 2, p[i + 1].x + dmax, p[i + 1].u, 4);
            fetch(ii + 3, w.x[4] + dmax, w.u[4], 5);
        } else {
            fetch(ii - 2, 0, 0, 1); // filled below after slot 2 exists
            fetch(ii - 1, p[i].x - dmax, p[i].u, 2);
            fetch(ii, 0, 0, 3);
            fetch(ii + 1, 0, 0, 4);
            fetch(ii + 2, p[i + 1].x + dmax, p[i + 1].u, 5);
            if (!w.real[1]) {
                w.x[1] = w.x[2] - dmax;
                w.u[1] = w.u[2];
            }
            // reflect into canonical coordinates: slot k <- source slot 6-k, x -> -x
            Window v;
            v.mirrored = true;
            for (int k = 1; k <= 5; ++k) {
                v.x[k] = -w.x[6 - k];
                v.u[k] = w.u[6 - k];
                v.real[k] = w.real[6 - k];
                v.idx[k] = w.idx[6 - k];
            }
            w = v;
        }

        solve_inflection(w, i);
    }

    // Area over the canonical window slots [1..5].
    double window_area5(const Window& w) const {
        FluxModel::CounterPause pause(f_.flux());
        double a = 0;
        for (int k = 1; k <= 4; ++k)
            a += (w.x[k + 1] - w.x[k]) * average(f_.flux(), w.u[k], w.u[k + 1]);
        return a;
    }

    void solve_inflection(const Window& w, std::size_t pair_i) {
        const FluxModel& flux = f_.flux();
        const double pos_tol = f_.overtake_tol();
        const double a_total = window_area5(w);

        // Strategy 1: drop w2, slide the inflection particle to x3'.
        {
            const double alpha = average(flux, w.u[1], w.u[3]);
            const double beta = average(flux, w.u[3], w.u[4]);
            const double c1 = a_total - (w.x[5] - w.x[4]) * average(flux, w.u[4], w.u[5]);
            const double den = alpha - beta;
            if (std::abs(den) > 1e-13 * (std::abs(alpha) + std::abs(beta) + 1)) {
                const double x3p = (c1 + w.x[1] * alpha - w.x[4] * beta) / den;
                if (x3p >= w.x[3] - pos_tol && x3p <= w.x[4] + pos_tol) {
                    apply_inflection(w, pair_i, 1, std::min(x3p, w.x[4]), 0.0);
                    return;
                }
            }
        }
        // Strategy 2: drop w2, stack the inflection particle onto w4 at position y.
        {
            const double alpha = average(flux, w.u[1], w.u[3]);
            const double gamma = average(flux, w.u[4], w.u[5]);
            const double den = alpha - gamma;
            if (std::abs(den) > 1e-13 * (std::abs(alpha) + std::abs(gamma) + 1)) {
                const double y = (a_total + w.x[1] * alpha - w.x[5] * gamma) / den;
                if (y >= w.x[4] - pos_tol && y < w.x[5] - pos_tol) {
                    apply_inflection(w, pair_i, 2, std::max(y, w.x[4]), 0.0);
                    return;
                }
            }
        }
        // Strategy 3: drop w4, move the inflection particle to x5, lower u2.
        {
            const double w21 = w.x[2] - w.x[1];
            const double w52 = w.x[5] - w.x[2];
            auto residual = [&](double v) {
                return w21 * average(flux, w.u[1], v) + w52 * average(flux, v, w.u[3]) -
                       a_total;
            };
            // Bracket downward from u2 (the admissible direction).
            double hi = w.u[2];
            double rhi = residual(hi);
            const double vscale = std::max({1.0, std::abs(w.u[1]), std::abs(w.u[2]),
                                            std::abs(w.u[3]), std::abs(w.u[5])});
            const double tol = 1e-12 * (std::abs(a_total) + (w.x[5] - w.x[1]) * vscale);
            double u2p = std::numeric_limits<double>::quiet_NaN();
            if (std::abs(rhi) <= tol) {
                u2p = hi;
            } else {
                double span = std::max(std::abs(w.u[2] - w.u[3]), 1e-3 * vscale);
                double lo = hi, rlo = rhi;
                for (int k = 0; k < 60; ++k) {
                    lo = hi - span;
                    span *= 2;
                    if (lo < flux.u_min()) lo = flux.u_min();
                    rlo = residual(lo);
                    if ((rlo > 0) != (rhi > 0) || std::abs(rlo) <= tol) break;
                    if (lo == flux.u_min()) break;
                }
                if (std::abs(rlo) <= tol) {
                    u2p = lo;
                } else if ((rlo > 0) != (rhi > 0)) {
                    auto fdf = [&](double v) {
                        const double r = residual(v);
                        const double dr = w21 * davg_du2(flux, w.u[1], v) +
                                          w52 * davg_du1(flux, v, w.u[3]);
                        return std::pair<double, double>(r, dr);
                    };
                    RootResult res = newton_bisection(fdf, lo, hi, 0.5 * (lo + hi), tol);
                    if (res.converged) u2p = res.x;
                }
            }
            if (std::isfinite(u2p)) {
                apply_inflection(w, pair_i, 3, 0.0, u2p);
                return;
            }
        }
        throw ManagementError("no inflection merging strategy was applicable");
    }

    // Apply the chosen strategy back in front coordinates. Exactly one particle is
    // removed; the inflection particle keeps its value and role.
    void apply_inflection(const Window& w, std::size_t pair_i, int strategy, double xpos,
                          double u2p) {
        auto& p = ps();
        const std::size_t lo = pair_i >= 2 ? pair_i - 2 : 0;
        const std::size_t hi0 = std::min(pair_i + 3, p.size() - 1);
        double umin = 0, umax = 0;
        std::vector<double> ent0;
        if (o_.track_entropy) {
            window_range(lo, hi0, umin, umax);
            ent0 = window_entropy(lo, hi0, umin, umax);
        }
        const double a0 = window_area(lo, hi0);
        const double tv0 = window_tv(lo, hi0);

        auto unmap_x = [&](double xc) { return w.mirrored ? -xc : xc; };

        EventRecord r;
        r.kind = EventKind::inflection_merge;
        r.detail = strategy;
        std::size_t removed_idx = static_cast<std::size_t>(-1);
        if (strategy == 1 || strategy == 2) {
            // remove canonical w2; move inflection (w3) to xpos (strategy 1) or stack
            // it with w4 at xpos (strategy 2)
            if (!w.real[2] || !w.real[3])
                throw ManagementError("inflection strategy needs real particles in the window");
            const std::size_t i3 = w.idx[3];
            p[i3].x = unmap_x(xpos);
            if (strategy == 2) {
                if (!w.real[4])
                    throw ManagementError("inflection strategy 2 needs a real w4 particle");
                p[w.idx[4]].x = unmap_x(xpos);
            }
            removed_idx = w.idx[2];
            r.id_a = p[removed_idx].id;
            r.id_result = p[i3].id;
            r.x = unmap_x(xpos);
        } else {
            // strategy 3: remove w4, move inflection (w3) to x5, set u2 -> u2p
            if (!w.real[2] || !w.real[3] || !w.real[4])
                throw ManagementError("inflection strategy 3 needs real particles in the window");
            const std::size_t i3 = w.idx[3];
            p[i3].x = unmap_x(w.x[5]);
            Particle& p2 = p[w.idx[2]];
            p2.u = u2p;
            p2.speed = f_.flux().df(u2p);
            removed_idx = w.idx[4];
            r.id_a = p[removed_idx].id;
            r.id_result = p[i3].id;
            r.x = p[i3].x;
        }
        r.role_a = static_cast<std::uint8_t>(p[removed_idx].role);
        p.erase(p.begin() + static_cast<std::ptrdiff_t>(removed_idx));
        const std::size_t hi2 = hi0 - 1;
        r.area_delta = window_area(lo, hi2) - a0;
        r.tv_delta = window_tv(lo, hi2) - tv0;
        if (o_.track_entropy)
            r.entropy_delta = window_entropy_max_delta(lo, hi2, umin, umax, ent0);
        emit(std::move(r));

        // keep ordering: strategies may stack particles exactly; nothing moves past
        // its neighbours by construction, but a strategy-2 stack plus later motion can
        // produce equal positions which dedupe/merge sweeps handle.
    }
};

inline std::size_t manage(ParticleFront& front, const ManageOptions& opts,
                          EventSink sink = nullptr) {
    Manager m(front, opts, std::move(sink));
    m.pass();
    return m.inserted_count();
}

// Standalone stacked-run cleanup: runs of three or more particles at one position
// keep only min-u / max-u / inflection members. Returns the number removed.
inline std::size_t dedupe_stacked(ParticleFront& front) {
    ManageOptions o;
    o.track_entropy = false;
    std::size_t removed = 0;
    Manager m(front, o, [&removed](const EventRecord& r) {
        if (r.kind == EventKind::dedupe) ++removed;
    });
    m.dedupe_literal();
    return removed;
}

// Convenience options for conservative-mode management.
inline ManageOptions default_manage_options(const ParticleFront& f) {
    ManageOptions o;
    o.trigger_gap = std::max(f.d_min(), f.overtake_tol());
    o.overtake_allowance = f.overtake_tol();
    return o;
}

} // namespace raretrack
