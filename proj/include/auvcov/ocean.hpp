#pragma once
// Steady ocean current field: a uniform background drift plus Lamb-Oseen
// vortices about vertical axes. The tangential speed of one vortex is
//
//   v_theta(r) = Gamma / (2 pi r) * (1 - exp(-r^2 / r_c^2))
//
// with r the horizontal distance to the axis. The profile is solid-body near
// the core, decays like 1/r far out, and peaks at r ~= 1.1209 r_c. Vertical
// flow is zero; superposition of vortices and drift is linear.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "vec3.hpp"

namespace auvcov::ocean {

struct Vortex {
  Vec3 axis;           // any point on the vertical axis; only x, y matter
  double circulation;  // Gamma, m^2/s, sign sets the sense of rotation
  double core_radius;  // r_c, m

  void validate() const {
    if (core_radius <= 0.0)
      throw std::domain_error("Vortex: core radius must be positive");
  }
};

struct CurrentField {
  Vec3 drift;
  std::vector<Vortex> vortices;

  void validate() const {
    for (const auto& v : vortices) v.validate();
  }
};

// Tangential speed of a single Lamb-Oseen vortex at horizontal radius r.
inline double lamb_oseen_speed(double r, double circulation,
                               double core_radius) {
  if (core_radius <= 0.0)
    throw std::domain_error("lamb_oseen_speed: core radius must be positive");
  if (r < 0.0) throw std::domain_error("lamb_oseen_speed: negative radius");
  if (r == 0.0) return 0.0;
  return circulation / (2.0 * std::numbers::pi * r) *
         (1.0 - std::exp(-(r * r) / (core_radius * core_radius)));
}

// Water velocity at a point: drift plus the tangential contribution of each
// vortex (counter-clockwise for positive circulation, viewed from above).
inline Vec3 current_at(const Vec3& p, const CurrentField& field) {
  Vec3 v = field.drift;
  for (const auto& vx : field.vortices) {
    const double dx = p.x - vx.axis.x;
    const double dy = p.y - vx.axis.y;
    const double r = std::hypot(dx, dy);
    if (r < 1e-12) continue;  // on the axis: no tangential component
    const double speed = lamb_oseen_speed(r, vx.circulation, vx.core_radius);
    v.x += speed * (-dy / r);
    v.y += speed * (dx / r);
  }
  return v;
}

// Velocity of the vehicle relative to the water, which is what drag acts on.
inline Vec3 relative_velocity(const Vec3& ground_velocity, const Vec3& p,
                              const CurrentField& field) {
  return ground_velocity - current_at(p, field);
}

// Explicit-Euler position update, clamped to the water column. Anything that
// would leave the box sticks to the wall for the rest of the slice.
inline Vec3 integrate_position(const Vec3& p, const Vec3& ground_velocity,
                               double dt, const WorldBox& box) {
  if (dt <= 0.0)
    throw std::domain_error("integrate_position: dt must be positive");
  return box.clamp(p + ground_velocity * dt);
}

}  // namespace auvcov::ocean
