#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "raretrack/flux.hpp"
#include "raretrack/particle.hpp"
#include "raretrack/wave.hpp"

namespace raretrack {

class FrontError : public std::runtime_error {
public:
    explicit FrontError(const std::string& what) : std::runtime_error(what) {}
};

// Ordered set of characteristic particles representing a piecewise similarity-wave
// profile, plus the flux model and the resolution parameters d_max / d_min.
//
// Invariants (validate()):
//  - positions non-decreasing;
//  - no segment's value interval strictly contains a flux inflection;
//  - particle values inside the flux domain; cached speeds equal f'(u);
//  - inflection-role particles carry exactly a cached inflection value.
class ParticleFront {
public:
    ParticleFront() = default;
    ParticleFront(FluxModel flux, double d_max, double d_min = 0.0)
        : flux_(std::move(flux)), d_max_(d_max), d_min_(d_min) {
        if (!(d_max_ > 0)) throw FrontError("d_max must be positive");
        if (d_min_ < 0 || d_min_ >= d_max_) throw FrontError("require 0 <= d_min < d_max");
    }

    const FluxModel& flux() const { return flux_; }
    double d_max() const { return d_max_; }
    double d_min() const { return d_min_; }
    double time() const { return t_; }
    void set_time(double t) { t_ = t; }

    // Absolute position tolerance: pairs overtaken by up to this amount after an exact
    // collision step are treated as stacked (floating-point slop).
    double overtake_tol() const { return 1e-12 * width_scale(); }
    double width_scale() const {
        if (width_scale_ > 0) return width_scale_;
        if (particles_.size() >= 2)
            return std::max(particles_.back().x - particles_.front().x, d_max_);
        return d_max_;
    }
    void set_width_scale(double w) { width_scale_ = w; }

    std::vector<Particle>& particles() { return particles_; }
    const std::vector<Particle>& particles() const { return particles_; }
    std::size_t size() const { return particles_.size(); }
    const Particle& operator[](std::size_t i) const { return particles_[i]; }

    std::uint64_t fresh_id() { return next_id_++; }

    // Construct a particle with cached speed (one f' evaluation).
    Particle make_particle(double x, double u, Role role = Role::regular) {
        if (!flux_.in_domain(u))
            throw FrontError("particle value outside flux domain: u=" + std::to_string(u));
        return Particle{x, u, flux_.df(u), role, fresh_id()};
    }

    void append(double x, double u, Role role = Role::regular) {
        if (!particles_.empty() && x < particles_.back().x - overtake_tol())
            throw FrontError("append would break position ordering");
        particles_.push_back(make_particle(x, u, role));
    }

    // Characteristic transport: x += f'(u) dt, u unchanged. Zero flux evaluations
    // (speeds are cached). dt must not step past the next collision.
    void advance(double dt, bool check_collisions = true) {
        if (dt < 0) throw FrontError("advance: negative dt");
        if (dt == 0) return;
        if (check_collisions) {
            const double dt_next = next_event();
            if (dt > dt_next && dt - dt_next > 1e-12 * std::max(1.0, dt))
                throw FrontError("advance: dt steps past the next collision");
        }
        for (auto& p : particles_) p.x += p.speed * dt;
        t_ += dt;
    }

    // Smallest nonnegative collision time over adjacent pairs; +inf if none. Pairs
    // overtaken within tolerance count as colliding now (returns 0).
    double next_event() const {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i + 1 < particles_.size(); ++i) {
            const auto& a = particles_[i];
            const auto& b = particles_[i + 1];
            if (b.x < a.x - overtake_tol())
                throw FrontError("next_event: front out of order beyond tolerance");
            const auto dt = collision_time_from_speeds(a.x, a.speed, b.x, b.speed);
            if (dt && *dt < best) best = std::max(0.0, *dt);
            if (b.x < a.x) best = 0.0; // overtaken within tolerance: handle immediately
        }
        return best;
    }

    // Area under the interpolant between the extreme particles (sum of segment areas).
    // Diagnostic: does not count flux evaluations.
    double total_area() const {
        FluxModel::CounterPause pause(flux_);
        double a = 0.0;
        for (std::size_t i = 0; i + 1 < particles_.size(); ++i)
            a += segment_area(flux_, particles_[i].x, particles_[i].u, particles_[i + 1].x,
                              particles_[i + 1].u);
        return a;
    }

    // Total variation of the particle values.
    double total_variation() const {
        double tv = 0.0;
        for (std::size_t i = 0; i + 1 < particles_.size(); ++i)
            tv += std::abs(particles_[i + 1].u - particles_[i].u);
        return tv;
    }

    // Rate of change of total_area under characteristic motion: F(u_last) - F(u_first)
    // (interior Legendre terms telescope). Piecewise constant between events.
    double area_rate() const {
        if (particles_.size() < 2) return 0.0;
        FluxModel::CounterPause pause(flux_);
        return flux_.legendre(particles_.back().u) - flux_.legendre(particles_.front().u);
    }

    void validate() const {
        for (std::size_t i = 0; i < particles_.size(); ++i) {
            const auto& p = particles_[i];
            if (!flux_.in_domain(p.u)) throw FrontError("validate: value outside flux domain");
            if (p.role == Role::inflection) {
                bool hit = false;
                for (double v : flux_.inflections())
                    if (v == p.u) hit = true;
                if (!hit)
                    throw FrontError("validate: inflection particle value is not a cached "
                                     "inflection value");
            }
            if (i + 1 < particles_.size()) {
                const auto& q = particles_[i + 1];
                if (q.x < p.x - overtake_tol())
                    throw FrontError("validate: positions out of order");
                if (flux_.spans_inflection(p.u, q.u))
                    throw FrontError("validate: segment value interval strictly contains an "
                                     "inflection; add an inflection particle");
            }
        }
    }

private:
    FluxModel flux_;
    std::vector<Particle> particles_;
    double d_max_ = 0.0;
    double d_min_ = 0.0;
    double t_ = 0.0;
    double width_scale_ = 0.0;
    std::uint64_t next_id_ = 1;
};

} // namespace raretrack
