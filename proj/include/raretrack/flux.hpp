#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace raretrack {

class FluxError : public std::runtime_error {
public:
    explicit FluxError(const std::string& what) : std::runtime_error(what) {}
};

// Convexity of f over a value interval.
enum class ConvexitySign { convex, concave, flat, mixed };

namespace detail {

struct FluxCounters {
    std::atomic<std::uint64_t> f{0}, df{0}, ddf{0};
    std::atomic<int> pause_depth{0};
    std::atomic<bool> enabled{true};

    void bump(std::atomic<std::uint64_t>& c) const {
        if (enabled.load(std::memory_order_relaxed) &&
            pause_depth.load(std::memory_order_relaxed) == 0)
            const_cast<std::atomic<std::uint64_t>&>(c).fetch_add(1, std::memory_order_relaxed);
    }
};

struct FluxState {
    std::string id;
    std::map<std::string, double> params;
    std::function<double(double)> f, df, ddf;
    double u_lo = -std::numeric_limits<double>::infinity();
    double u_hi = std::numeric_limits<double>::infinity();
    // Values u* where f'' changes sign, sorted; slope_sign[i] = sign of f''' at u*[i]
    // (+1: f'' goes -,+ so f' has a minimum; -1: f'' goes +,- so f' has a maximum).
    std::vector<double> inflections;
    std::vector<int> inflection_slope_sign;
    // Interior zeros of f' (for exact min/max of f over an interval).
    std::vector<double> stationaries;
    bool quadratic = false; // f'' constant: averages reduce to arithmetic means
    mutable FluxCounters counters;
};

} // namespace detail

struct FluxEvalCounts {
    std::uint64_t f = 0, df = 0, ddf = 0;
    std::uint64_t total() const { return f + df + ddf; }
};

// A scalar flux model: f, f', f'' plus structural metadata (domain, inflection
// values, stationary points of f, quadratic flag) and evaluation counters.
// Cheap to copy; copies share state and counters.
class FluxModel {
public:
    FluxModel() = default;
    explicit FluxModel(std::shared_ptr<detail::FluxState> s) : s_(std::move(s)) {}

    bool valid() const { return static_cast<bool>(s_); }

    double f(double u) const {
        check_domain(u);
        s_->counters.bump(s_->counters.f);
        return s_->f(u);
    }
    double df(double u) const {
        check_domain(u);
        s_->counters.bump(s_->counters.df);
        return s_->df(u);
    }
    double ddf(double u) const {
        check_domain(u);
        s_->counters.bump(s_->counters.ddf);
        return s_->ddf(u);
    }

    // Legendre-type transform F(u) = f'(u) u - f(u); d/du F = f''(u) u.
    // [F] over a value interval is the rate of change of the area under a wave.
    double legendre(double u) const { return df(u) * u - f(u); }

    const std::string& id() const { return s_->id; }
    const std::map<std::string, double>& params() const { return s_->params; }
    double u_min() const { return s_->u_lo; }
    double u_max() const { return s_->u_hi; }
    bool in_domain(double u) const {
        return u >= s_->u_lo && u <= s_->u_hi && std::isfinite(u);
    }

    const std::vector<double>& inflections() const { return s_->inflections; }
    // Sign of f''' at inflections()[i]: +1 means f' has a local minimum there
    // (slowest particle), -1 a local maximum (fastest particle).
    int inflection_slope_sign(std::size_t i) const { return s_->inflection_slope_sign.at(i); }
    const std::vector<double>& stationaries() const { return s_->stationaries; }
    bool quadratic() const { return s_->quadratic; }

    // True if some inflection value lies strictly inside (min(a,b), max(a,b)).
    bool spans_inflection(double a, double b) const {
        const double lo = a < b ? a : b, hi = a < b ? b : a;
        for (double v : s_->inflections)
            if (v > lo && v < hi) return true;
        return false;
    }

    FluxEvalCounts evals() const {
        return {s_->counters.f.load(), s_->counters.df.load(), s_->counters.ddf.load()};
    }
    void reset_counters() const {
        s_->counters.f = 0;
        s_->counters.df = 0;
        s_->counters.ddf = 0;
    }
    void set_counting(bool on) const { s_->counters.enabled = on; }

    // RAII pause: evaluations inside the scope are not counted (diagnostics paths).
    class CounterPause {
    public:
        explicit CounterPause(const FluxModel& m) : c_(&m.s_->counters) {
            c_->pause_depth.fetch_add(1, std::memory_order_relaxed);
        }
        ~CounterPause() { c_->pause_depth.fetch_sub(1, std::memory_order_relaxed); }
        CounterPause(const CounterPause&) = delete;
        CounterPause& operator=(const CounterPause&) = delete;

    private:
        detail::FluxCounters* c_;
    };

private:
    void check_domain(double u) const {
        if (!s_) throw FluxError("flux model is empty");
        if (!(u >= s_->u_lo && u <= s_->u_hi))
            throw FluxError("flux evaluation outside domain: u=" + std::to_string(u) +
                            " not in [" + std::to_string(s_->u_lo) + ", " +
                            std::to_string(s_->u_hi) + "] for flux '" + s_->id + "'");
    }

    std::shared_ptr<detail::FluxState> s_;
};

namespace detail {

// Bisect g on [a,b] assuming a sign change; returns the root to abs tolerance tol in u.
template <class G>
double bisect_sign_change(G&& g, double a, double b, double tol) {
    double ga = g(a), gb = g(b);
    if (ga == 0.0) return a;
    if (gb == 0.0) return b;
    if ((ga > 0) == (gb > 0)) throw FluxError("bisection bracket does not change sign");
    while (b - a > tol) {
        const double m = 0.5 * (a + b);
        const double gm = g(m);
        if (gm == 0.0) return m;
        if ((gm > 0) == (ga > 0)) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    return 0.5 * (a + b);
}

inline void require_params(const std::map<std::string, double>& got,
                           const std::vector<std::string>& allowed, const std::string& id) {
    for (const auto& [k, v] : got) {
        bool ok = false;
        for (const auto& a : allowed)
            if (k == a) ok = true;
        if (!ok) throw FluxError("unknown parameter '" + k + "' for flux '" + id + "'");
        (void)v;
    }
}

inline double param_or(const std::map<std::string, double>& p, const std::string& k, double dflt) {
    auto it = p.find(k);
    return it == p.end() ? dflt : it->second;
}

} // namespace detail

// Built-in flux models. Derivatives are analytic.
//   burgers:           f = u^2/2                       (convex, quadratic)
//   quartic:           f = u^4/4                       (convex; f''(0)=0 without sign change)
//   buckley_leverett:  f = u^2 / (u^2 + M (1-u)^2)     (one inflection in (0,1); M default 1/2)
//   lwr_linear:        f = u v_max (1 - u/rho_max)     (concave, quadratic)
//   lwr_exponential:   f = u v_max exp(-u/rho_0)       (inflection at 2 rho_0)
inline FluxModel make_flux(const std::string& id,
                           const std::map<std::string, double>& params = {}) {
    auto s = std::make_shared<detail::FluxState>();
    s->id = id;
    s->params = params;
    constexpr double inf = std::numeric_limits<double>::infinity();

    if (id == "burgers") {
        detail::require_params(params, {}, id);
        s->f = [](double u) { return 0.5 * u * u; };
        s->df = [](double u) { return u; };
        s->ddf = [](double) { return 1.0; };
        s->quadratic = true;
        s->stationaries = {0.0};
    } else if (id == "quartic") {
        detail::require_params(params, {}, id);
        s->f = [](double u) { return 0.25 * u * u * u * u; };
        s->df = [](double u) { return u * u * u; };
        s->ddf = [](double u) { return 3.0 * u * u; };
        s->stationaries = {0.0};
        // f'' touches zero at u=0 but does not change sign: no inflection.
    } else if (id == "buckley_leverett") {
        detail::require_params(params, {"m"}, id);
        const double M = detail::param_or(params, "m", 0.5);
        if (!(M > 0)) throw FluxError("buckley_leverett requires m > 0");
        s->params["m"] = M;
        auto D = [M](double u) { return u * u + M * (1 - u) * (1 - u); };
        s->f = [D](double u) { return u * u / D(u); };
        s->df = [D, M](double u) {
            const double d = D(u);
            return 2.0 * M * u * (1 - u) / (d * d);
        };
        s->ddf = [D, M](double u) {
            // d/du [2M u(1-u) D^-2] = 2M [(1-2u) D - 4 M u(1-u)(... )]/D^3; expand directly:
            // N(u) = (1-2u) D(u) - 2 u (1-u) D'(u),  D' = 2u - 2M(1-u)
            const double d = D(u);
            const double dp = 2.0 * u - 2.0 * M * (1 - u);
            const double n = (1 - 2 * u) * d - 2.0 * u * (1 - u) * dp;
            return 2.0 * M * n / (d * d * d);
        };
        s->u_lo = 0.0;
        s->u_hi = 1.0;
        s->stationaries = {0.0, 1.0};
        // Single inflection in (0,1): bisect f'' (sign + at 0, - at 1).
        const double ustar =
            detail::bisect_sign_change([&s](double u) { return s->ddf(u); }, 1e-9, 1.0 - 1e-9, 1e-12);
        s->inflections = {ustar};
        s->inflection_slope_sign = {-1}; // f'' goes + to -: f' has a maximum (fastest)
    } else if (id == "lwr_linear") {
        detail::require_params(params, {"v_max", "rho_max"}, id);
        const double vm = detail::param_or(params, "v_max", 1.0);
        const double rm = detail::param_or(params, "rho_max", 1.0);
        if (!(vm > 0) || !(rm > 0)) throw FluxError("lwr_linear requires v_max, rho_max > 0");
        s->params = {{"v_max", vm}, {"rho_max", rm}};
        s->f = [vm, rm](double u) { return u * vm * (1 - u / rm); };
        s->df = [vm, rm](double u) { return vm * (1 - 2 * u / rm); };
        s->ddf = [vm, rm](double) { return -2 * vm / rm; };
        s->u_lo = 0.0;
        s->u_hi = rm;
        s->quadratic = true;
        s->stationaries = {rm / 2};
    } else if (id == "lwr_exponential") {
        detail::require_params(params, {"v_max", "rho_0"}, id);
        const double vm = detail::param_or(params, "v_max", 1.0);
        const double r0 = detail::param_or(params, "rho_0", 1.0);
        if (!(vm > 0) || !(r0 > 0)) throw FluxError("lwr_exponential requires v_max, rho_0 > 0");
        s->params = {{"v_max", vm}, {"rho_0", r0}};
        s->f = [vm, r0](double u) { return u * vm * std::exp(-u / r0); };
        s->df = [vm, r0](double u) { return vm * std::exp(-u / r0) * (1 - u / r0); };
        s->ddf = [vm, r0](double u) { return vm * std::exp(-u / r0) * (u / r0 - 2) / r0; };
        s->u_lo = 0.0;
        s->u_hi = inf;
        s->stationaries = {r0};
        s->inflections = {2 * r0};
        s->inflection_slope_sign = {+1}; // f'' goes - to +: f' has a minimum (slowest)
    } else {
        throw FluxError("unknown flux id '" + id + "'");
    }
    return FluxModel(std::move(s));
}

struct CustomFluxOptions {
    bool quadratic = false;
    int scan_points = 4097; // grid for inflection / stationary detection
};

// User-supplied flux; df and ddf must be provided (no numerical differentiation).
// Inflections and stationaries are located by a sign-change scan over [u_lo, u_hi]
// refined by bisection; the domain must be finite for the scan.
inline FluxModel make_custom_flux(const std::string& name, std::function<double(double)> f,
                                  std::function<double(double)> df,
                                  std::function<double(double)> ddf, double u_lo, double u_hi,
                                  CustomFluxOptions opts = {}) {
    if (!f || !df || !ddf) throw FluxError("custom flux requires f, df, ddf");
    if (!(u_lo < u_hi)) throw FluxError("custom flux requires u_lo < u_hi");
    auto s = std::make_shared<detail::FluxState>();
    s->id = name;
    s->f = std::move(f);
    s->df = std::move(df);
    s->ddf = std::move(ddf);
    s->u_lo = u_lo;
    s->u_hi = u_hi;
    s->quadratic = opts.quadratic;
    if (std::isfinite(u_lo) && std::isfinite(u_hi)) {
        // Track the last nonzero sample of each derivative so zeros landing exactly
        // on grid points (touching or crossing) do not hide a sign change.
        const int n = opts.scan_points;
        const double h = (u_hi - u_lo) / (n - 1);
        bool have_dd = false, have_d = false;
        double dd_u = 0, dd_v = 0, d_u = 0, d_v = 0;
        for (int i = 0; i < n; ++i) {
            const double u = u_lo + i * h;
            const double dd = s->ddf(u), d = s->df(u);
            if (dd != 0.0) {
                if (have_dd && (dd > 0) != (dd_v > 0)) {
                    const double ustar = detail::bisect_sign_change(s->ddf, dd_u, u, 1e-12);
                    s->inflections.push_back(ustar);
                    s->inflection_slope_sign.push_back(dd > 0 ? +1 : -1);
                }
                dd_u = u;
                dd_v = dd;
                have_dd = true;
            }
            if (d != 0.0) {
                if (have_d && (d > 0) != (d_v > 0))
                    s->stationaries.push_back(detail::bisect_sign_change(s->df, d_u, u, 1e-12));
                d_u = u;
                d_v = d;
                have_d = true;
            }
        }
    }
    return FluxModel(std::move(s));
}

// Convexity of f over [min(u1,u2), max(u1,u2)]: convex (+), concave (-), mixed if an
// inflection lies strictly inside, flat if f'' ~ 0 throughout (or exactly at an
// inflection for the degenerate u1 == u2 case).
inline ConvexitySign convexity_sign(const FluxModel& flux, double u1, double u2) {
    const double lo = u1 < u2 ? u1 : u2, hi = u1 < u2 ? u2 : u1;
    if (flux.spans_inflection(lo, hi)) return ConvexitySign::mixed;
    if (lo == hi) {
        for (double v : flux.inflections())
            if (v == lo) return ConvexitySign::flat;
        const double d = flux.ddf(lo);
        if (d > 0) return ConvexitySign::convex;
        if (d < 0) return ConvexitySign::concave;
        return ConvexitySign::flat;
    }
    // Sample a few interior points; inflection endpoints or degenerate touches (e.g.
    // f''(0)=0 for f=u^4/4) must not decide the sign.
    int pos = 0, neg = 0;
    for (int i = 1; i <= 5; ++i) {
        const double u = lo + (hi - lo) * i / 6.0;
        const double d = flux.ddf(u);
        if (d > 0) ++pos;
        if (d < 0) ++neg;
    }
    if (pos > 0 && neg == 0) return ConvexitySign::convex;
    if (neg > 0 && pos == 0) return ConvexitySign::concave;
    if (pos == 0 && neg == 0) return ConvexitySign::flat;
    return ConvexitySign::mixed; // inconsistent samples: treat as mixed (missed inflection)
}

} // namespace raretrack
