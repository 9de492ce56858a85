#pragma once

#include <cmath>

namespace qrestore {

// Plain value quaternion w + x*i + y*j + z*k. Used for scalar algebra and as
// the reference oracle for the vectorised layer implementations.
struct Quat {
  double w = 0.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend constexpr Quat operator+(const Quat& a, const Quat& b) {
    return {a.w + b.w, a.x + b.x, a.y + b.y, a.z + b.z};
  }
  friend constexpr Quat operator-(const Quat& a, const Quat& b) {
    return {a.w - b.w, a.x - b.x, a.y - b.y, a.z - b.z};
  }
  friend constexpr Quat operator*(double s, const Quat& a) {
    return {s * a.w, s * a.x, s * a.y, s * a.z};
  }
  friend constexpr bool operator==(const Quat& a, const Quat& b) {
    return a.w == b.w && a.x == b.x && a.y == b.y && a.z == b.z;
  }
};

// Hamilton product a*b. Non-commutative; follows the i*j = k convention.
constexpr Quat hamilton(const Quat& a, const Quat& b) {
  return {
      a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
      a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
      a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
      a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
  };
}

constexpr Quat conjugate(const Quat& a) { return {a.w, -a.x, -a.y, -a.z}; }

inline double norm(const Quat& a) {
  return std::sqrt(a.w * a.w + a.x * a.x + a.y * a.y + a.z * a.z);
}

constexpr double norm_sq(const Quat& a) {
  return a.w * a.w + a.x * a.x + a.y * a.y + a.z * a.z;
}

}  // namespace qrestore
