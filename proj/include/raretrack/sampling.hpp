#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "raretrack/expr.hpp"
#include "raretrack/flux.hpp"
#include "raretrack/front.hpp"

namespace raretrack {

class SamplingError : public std::runtime_error {
public:
    explicit SamplingError(const std::string& what) : std::runtime_error(what) {}
};

// One smooth piece of the initial condition, defined on the closed interval [a,b].
struct ICPiece {
    double a = 0, b = 0;
    std::string kind; // constant | linear | expr | gaussian_cosine | function
    std::function<double(double)> f;
    bool constant = false;
    double const_value = 0;
    double v0 = 0, v1 = 0; // linear endpoints
    std::string expr_src;  // expr pieces: source text (round-trip)
};

// Piecewise-smooth initial condition on [x_lo, x_hi]: contiguous smooth pieces;
// jumps arise wherever adjacent pieces disagree at their shared boundary.
class InitialCondition {
public:
    InitialCondition(double x_lo, double x_hi) : lo_(x_lo), hi_(x_hi) {
        if (!(x_lo < x_hi)) throw SamplingError("initial condition requires x_lo < x_hi");
    }

    void add_constant(double a, double b, double v) {
        ICPiece pc;
        pc.kind = "constant";
        pc.constant = true;
        pc.const_value = v;
        pc.f = [v](double) { return v; };
        add_piece(a, b, std::move(pc));
    }
    void add_linear(double a, double b, double v0, double v1) {
        ICPiece pc;
        pc.kind = "linear";
        pc.v0 = v0;
        pc.v1 = v1;
        pc.f = [a, b, v0, v1](double x) { return v0 + (v1 - v0) * (x - a) / (b - a); };
        add_piece(a, b, std::move(pc));
    }
    void add_expr(double a, double b, const std::string& src) {
        Expression e = Expression::parse(src);
        ICPiece pc;
        pc.kind = "expr";
        pc.expr_src = src;
        pc.f = [e](double x) { return e(x); };
        add_piece(a, b, std::move(pc));
    }
    // exp(-x^2) cos(pi x)
    void add_gaussian_cosine(double a, double b) {
        ICPiece pc;
        pc.kind = "gaussian_cosine";
        pc.f = [](double x) { return std::exp(-x * x) * std::cos(3.14159265358979323846 * x); };
        add_piece(a, b, std::move(pc));
    }
    void add_function(double a, double b, std::function<double(double)> f) {
        ICPiece pc;
        pc.kind = "function";
        pc.f = std::move(f);
        add_piece(a, b, std::move(pc));
    }

    double x_lo() const { return lo_; }
    double x_hi() const { return hi_; }
    const std::vector<ICPiece>& pieces() const { return pieces_; }

    void check() const {
        if (pieces_.empty()) throw SamplingError("initial condition has no pieces");
        const double tol = 1e-12 * (hi_ - lo_);
        if (std::abs(pieces_.front().a - lo_) > tol)
            throw SamplingError("pieces do not start at the domain's left end");
        if (std::abs(pieces_.back().b - hi_) > tol)
            throw SamplingError("pieces do not reach the domain's right end");
    }

    // Value at x; right-continuous at piece boundaries (the last piece owns x_hi).
    double operator()(double x) const {
        return piece_at(x).f(x);
    }
    double value_left(double x) const {
        for (std::size_t i = pieces_.size(); i-- > 0;) {
            if (x > pieces_[i].a && x <= pieces_[i].b) return pieces_[i].f(x);
        }
        return pieces_.front().f(x);
    }

    struct Jump {
        double x;
        double u_left, u_right;
    };
    std::vector<Jump> jumps() const {
        std::vector<Jump> out;
        for (std::size_t i = 0; i + 1 < pieces_.size(); ++i) {
            const double x = pieces_[i].b;
            const double ul = pieces_[i].f(x);
            const double ur = pieces_[i + 1].f(pieces_[i + 1].a);
            if (ul != ur) out.push_back({x, ul, ur});
        }
        return out;
    }

    // Integral over [a,b] by 8-point Gauss-Legendre panels per piece overlap.
    double integral(double a, double b) const {
        if (b < a) return -integral(b, a);
        static const double gx[4] = {0.1834346424956498, 0.5255324099163290,
                                     0.7966664774136267, 0.9602898564975363};
        static const double gw[4] = {0.3626837833783620, 0.3137066458778873,
                                     0.2223810344533745, 0.1012285362903763};
        double total = 0;
        for (const auto& pc : pieces_) {
            const double lo = std::max(a, pc.a), hi = std::min(b, pc.b);
            if (hi <= lo) continue;
            if (pc.constant) {
                total += pc.const_value * (hi - lo);
                continue;
            }
            const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / 0.25)));
            for (int p = 0; p < panels; ++p) {
                const double pa = lo + (hi - lo) * p / panels;
                const double pb = lo + (hi - lo) * (p + 1) / panels;
                const double mid = 0.5 * (pa + pb), half = 0.5 * (pb - pa);
                double s = 0;
                for (int q = 0; q < 4; ++q)
                    s += gw[q] * (pc.f(mid + half * gx[q]) + pc.f(mid - half * gx[q]));
                total += s * half;
            }
        }
        return total;
    }

private:
    double lo_, hi_;
    std::vector<ICPiece> pieces_;

    void add_piece(double a, double b, ICPiece pc) {
        if (!(a < b)) throw SamplingError("piece requires a < b");
        const double tol = 1e-12 * (hi_ - lo_);
        if (!pieces_.empty() && std::abs(pieces_.back().b - a) > tol)
            throw SamplingError("pieces must be contiguous (gap or overlap at x=" +
                                std::to_string(a) + ")");
        pc.a = a;
        pc.b = b;
        pieces_.push_back(std::move(pc));
    }

    const ICPiece& piece_at(double x) const {
        for (const auto& pc : pieces_)
            if (x >= pc.a && x < pc.b) return pc;
        if (x >= pieces_.back().b) return pieces_.back();
        return pieces_.front();
    }
};

// Convert an initial condition into a particle front:
//  - equidistant samples per smooth piece at spacing <= d_max with u_i = u0(x_i);
//  - a particle pinned at u* wherever u0 crosses an inflection value (position by
//    bisection to 1e-13 of the domain width);
//  - each jump becomes stacked particles; jumps spanning an inflection value get a
//    stacked inflection particle plus ceil(|du| * width/d_max) (min 3) fan values
//    equispaced in u, so immediate fans and collapses are resolved.
inline ParticleFront sample(const FluxModel& flux, const InitialCondition& ic, double d_max,
                            double d_min = 0.0) {
    ic.check();
    const double width = ic.x_hi() - ic.x_lo();
    const double n_total = width / d_max;
    ParticleFront front(flux, d_max, d_min);
    front.set_width_scale(width);

    const auto& infl = flux.inflections();
    auto role_of = [&](double u) {
        for (double v : infl)
            if (u == v) return Role::inflection;
        return Role::regular;
    };

    struct Staged {
        double x, u;
        Role role;
    };
    std::vector<Staged> out;
    auto emit = [&](double x, double u, Role r) {
        if (!out.empty() && out.back().x == x && out.back().u == u) {
            if (r == Role::inflection) out.back().role = r;
            return;
        }
        out.push_back({x, u, r});
    };

    const auto& pieces = ic.pieces();
    for (std::size_t pi = 0; pi < pieces.size(); ++pi) {
        const ICPiece& pc = pieces[pi];
        if (pi > 0) {
            // jump between the previous piece and this one
            const double x = pc.a;
            const double ul = pieces[pi - 1].f(pieces[pi - 1].b);
            const double ur = pc.f(x);
            if (ul != ur) {
                const double jlo = std::min(ul, ur), jhi = std::max(ul, ur);
                std::vector<double> crossed;
                for (double v : infl)
                    if (v > jlo && v < jhi) crossed.push_back(v);
                if (!crossed.empty()) {
                    const int m = std::max(
                        3, static_cast<int>(std::ceil(std::abs(ur - ul) * n_total)));
                    std::vector<double> vals;
                    vals.reserve(static_cast<std::size_t>(m) + crossed.size());
                    for (int t = 1; t <= m; ++t) vals.push_back(ul + (ur - ul) * t / (m + 1));
                    for (double v : crossed) vals.push_back(v);
                    // order along the traversal ul -> ur
                    std::sort(vals.begin(), vals.end());
                    if (ul > ur) std::reverse(vals.begin(), vals.end());
                    double prev_emitted = ul;
                    for (double v : vals) {
                        const Role r = role_of(v);
                        if (r == Role::regular) {
                            // drop fan values colliding with an inflection value
                            bool near_infl = false;
                            for (double w : crossed)
                                if (std::abs(v - w) <= 1e-12 * std::max(1.0, std::abs(w)))
                                    near_infl = true;
                            if (near_infl) continue;
                        }
                        if (v == prev_emitted) continue;
                        emit(x, v, r);
                        prev_emitted = v;
                    }
                }
                emit(x, ur, role_of(ur));
            }
        }
        // equidistant interior samples
        const int k =
            std::max(1, static_cast<int>(std::ceil((pc.b - pc.a) / d_max - 1e-9)));
        double xp = 0, up = 0;
        bool have_prev = false;
        for (int j = 0; j <= k; ++j) {
            const double x = pc.a + (pc.b - pc.a) * j / k;
            double u;
            try {
                u = pc.f(x);
            } catch (const std::exception& e) {
                throw SamplingError("initial condition evaluation failed at x=" +
                                    std::to_string(x) + ": " + e.what());
            }
            if (!flux.in_domain(u))
                throw SamplingError("initial value u=" + std::to_string(u) + " at x=" +
                                    std::to_string(x) + " is outside the flux domain");
            if (have_prev) {
                // inflection crossings between consecutive samples
                std::vector<std::pair<double, double>> crossings; // (x, u*)
                for (double v : infl) {
                    if ((up - v) * (u - v) < 0.0) {
                        const double xtol = 1e-13 * width;
                        double a = xp, b = x;
                        double ga = up - v;
                        for (int it = 0; it < 200 && b - a > xtol; ++it) {
                            const double mmid = 0.5 * (a + b);
                            const double gm = pc.f(mmid) - v;
                            if (gm == 0) {
                                a = b = mmid;
                                break;
                            }
                            if ((ga < 0) != (gm < 0))
                                b = mmid;
                            else {
                                a = mmid;
                                ga = gm;
                            }
                        }
                        crossings.emplace_back(0.5 * (a + b), v);
                    }
                }
                std::sort(crossings.begin(), crossings.end());
                for (const auto& [xc, v] : crossings) emit(xc, v, Role::inflection);
            }
            emit(x, u, role_of(u));
            xp = x;
            up = u;
            have_prev = true;
        }
    }

    for (const auto& s : out) front.append(s.x, s.u, s.role);
    front.validate();
    return front;
}

} // namespace raretrack
