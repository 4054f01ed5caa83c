#pragma once

#include <algorithm>
#include <cmath>

namespace auvcov {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }

  friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend Vec3 operator*(Vec3 a, double s) { return a *= s; }
  friend Vec3 operator*(double s, Vec3 a) { return a *= s; }
  friend Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
  friend bool operator==(const Vec3& a, const Vec3& b) {
    return a.x == b.x && a.y == b.y && a.z == b.z;
  }

  double squared_norm() const { return x * x + y * y + z * z; }
  double norm() const { return std::sqrt(squared_norm()); }
  double horizontal_norm() const { return std::hypot(x, y); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

inline double horizontal_distance(const Vec3& a, const Vec3& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Axis-aligned water column: x, y in [0, extent], z in [-depth, 0].
// z = 0 is the surface.
struct WorldBox {
  double extent = 200.0;
  double depth = 200.0;

  bool contains(const Vec3& p) const {
    return p.x >= 0.0 && p.x <= extent && p.y >= 0.0 && p.y <= extent &&
           p.z >= -depth && p.z <= 0.0;
  }

  Vec3 clamp(const Vec3& p) const {
    return {std::clamp(p.x, 0.0, extent), std::clamp(p.y, 0.0, extent),
            std::clamp(p.z, -depth, 0.0)};
  }

  double diagonal() const {
    return std::sqrt(2.0 * extent * extent + depth * depth);
  }
};

}  // namespace auvcov
