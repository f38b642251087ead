#pragma once

#include <cstdint>

namespace raretrack {

// Role tags carried by particles.
//  - shock:      result of merging a compressive pair; postprocessing replaces these
//                by a zero-width discontinuity.
//  - inflection: pinned at a flux inflection value; separates convex from concave
//                segments and is never value-averaged.
enum class Role : std::uint8_t { regular = 0, shock = 1, inflection = 2 };

// A characteristic particle: position, carried value, cached speed f'(u), role, id.
// The cached speed makes characteristic transport free of flux evaluations; it is
// refreshed whenever u changes (creation, merges, source steps).
struct Particle {
    double x = 0.0;
    double u = 0.0;
    double speed = 0.0;
    Role role = Role::regular;
    std::uint64_t id = 0;
};

inline bool is_shock(const Particle& p) { return p.role == Role::shock; }
inline bool is_inflection(const Particle& p) { return p.role == Role::inflection; }

} // namespace raretrack
