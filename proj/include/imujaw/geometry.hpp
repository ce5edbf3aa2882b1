/*
 * Copyright (C) 2026 The imujaw authors
 *
 * SPDX-License-Identifier: Apache-2.0
 * See the file LICENSE for more information.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "imujaw/error.hpp"

// Minimal 3D kernel: vectors, unit quaternions, 3x3 matrices and triangle
// local frames. Conventions used throughout the project:
//   - quaternion layout (w, x, y, z), Hamilton product
//   - rotation matrices act on column vectors, R * v
//   - Euler angles are intrinsic Z-Y-X (yaw, pitch, roll), the aerospace
//     order spoken by flight controllers

namespace imujaw {

inline constexpr double kPi = 3.14159265358979323846;

struct DegenerateTriangle : Error {
  using Error::Error;
};

constexpr double deg2rad(double deg) { return deg * (kPi / 180.0); }
constexpr double rad2deg(double rad) { return rad * (180.0 / kPi); }

// ---------------------------------------------------------------------------
// Vec3

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  friend constexpr Vec3 operator+(const Vec3& a, const Vec3& b) {
    return {a.x + b.x, a.y + b.y, a.z + b.z};
  }
  friend constexpr Vec3 operator-(const Vec3& a, const Vec3& b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
  }
  friend constexpr Vec3 operator*(const Vec3& v, double s) {
    return {v.x * s, v.y * s, v.z * s};
  }
  friend constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
  friend constexpr Vec3 operator-(const Vec3& v) { return {-v.x, -v.y, -v.z}; }

  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }

  friend constexpr bool operator==(const Vec3& a, const Vec3& b) {
    return a.x == b.x && a.y == b.y && a.z == b.z;
  }

  bool is_finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

constexpr double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double squared_norm(const Vec3& v) { return dot(v, v); }
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

/// Unit vector along v. Undefined for the zero vector; callers guard.
inline Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  return {v.x / n, v.y / n, v.z / n};
}

// ---------------------------------------------------------------------------
// Mat3 (row-major)

struct Mat3 {
  std::array<double, 9> m{};

  static constexpr Mat3 identity() {
    Mat3 r;
    r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    return r;
  }
  static constexpr Mat3 zero() { return Mat3{}; }

  static Mat3 from_columns(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
    Mat3 r;
    r.m = {c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z};
    return r;
  }

  constexpr double operator()(int row, int col) const { return m[3 * row + col]; }
  constexpr double& operator()(int row, int col) { return m[3 * row + col]; }

  Vec3 row(int r) const { return {m[3 * r], m[3 * r + 1], m[3 * r + 2]}; }
  Vec3 col(int c) const { return {m[c], m[3 + c], m[6 + c]}; }

  Mat3 transpose() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }

  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) -
           m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }

  /// Inverse via the adjugate. Callers ensure the matrix is invertible.
  Mat3 inverse() const {
    const double d = det();
    Mat3 r;
    r.m = {m[4] * m[8] - m[5] * m[7], m[2] * m[7] - m[1] * m[8],
           m[1] * m[5] - m[2] * m[4], m[5] * m[6] - m[3] * m[8],
           m[0] * m[8] - m[2] * m[6], m[2] * m[3] - m[0] * m[5],
           m[3] * m[7] - m[4] * m[6], m[1] * m[6] - m[0] * m[7],
           m[0] * m[4] - m[1] * m[3]};
    for (double& v : r.m) v /= d;
    return r;
  }

  friend Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
        r(i, j) = s;
      }
    return r;
  }

  friend Vec3 operator*(const Mat3& a, const Vec3& v) {
    return {a.m[0] * v.x + a.m[1] * v.y + a.m[2] * v.z,
            a.m[3] * v.x + a.m[4] * v.y + a.m[5] * v.z,
            a.m[6] * v.x + a.m[7] * v.y + a.m[8] * v.z};
  }

  friend Mat3 operator+(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = a.m[i] + b.m[i];
    return r;
  }

  friend Mat3 operator-(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = a.m[i] - b.m[i];
    return r;
  }

  friend Mat3 operator*(const Mat3& a, double s) {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = a.m[i] * s;
    return r;
  }

  bool is_finite() const {
    for (double v : m)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Largest absolute entry, used as an infinity-norm for tolerance checks.
inline double max_abs(const Mat3& a) {
  double r = 0.0;
  for (double v : a.m) r = std::max(r, std::fabs(v));
  return r;
}

/// Sum of squared entries (squared Frobenius norm).
inline double frobenius_sq(const Mat3& a) {
  double r = 0.0;
  for (double v : a.m) r += v * v;
  return r;
}

/// True when r is orthonormal with det +1, entrywise within tol.
inline bool is_rotation(const Mat3& r, double tol) {
  const Mat3 gram = r.transpose() * r;
  if (max_abs(gram - Mat3::identity()) > tol) return false;
  return std::fabs(r.det() - 1.0) <= tol;
}

// ---------------------------------------------------------------------------
// UnitQuat

/// Unit quaternion (w, x, y, z). Every constructor and operation leaves the
/// norm at 1 within 1e-9; renormalization absorbs floating-point drift.
struct UnitQuat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  UnitQuat() = default;

  UnitQuat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {
    renormalize();
  }

  static UnitQuat identity() { return UnitQuat{}; }

  UnitQuat conjugate() const {
    UnitQuat q;
    q.w = w;
    q.x = -x;
    q.y = -y;
    q.z = -z;
    return q;
  }

  void renormalize() {
    const double n2 = w * w + x * x + y * y + z * z;
    if (n2 <= 0.0 || !std::isfinite(n2)) throw Error("quaternion norm is zero or non-finite");
    const double inv = 1.0 / std::sqrt(n2);
    w *= inv;
    x *= inv;
    y *= inv;
    z *= inv;
  }

  friend bool operator==(const UnitQuat& a, const UnitQuat& b) {
    return a.w == b.w && a.x == b.x && a.y == b.y && a.z == b.z;
  }
};

inline double quat_dot(const UnitQuat& a, const UnitQuat& b) {
  return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
}

/// Hamilton product, renormalized.
inline UnitQuat quat_mul(const UnitQuat& a, const UnitQuat& b) {
  UnitQuat q;
  q.w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
  q.x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
  q.y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
  q.z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
  q.renormalize();
  return q;
}

inline UnitQuat operator*(const UnitQuat& a, const UnitQuat& b) { return quat_mul(a, b); }

/// Rotation angle in [0, pi] taking a to b (double cover folded out).
/// Computed from the relative quaternion with atan2, which stays accurate
/// near zero where acos(dot) loses half the significant digits.
inline double quat_angle(const UnitQuat& a, const UnitQuat& b) {
  const double w = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
  const double x = a.w * b.x - a.x * b.w - a.y * b.z + a.z * b.y;
  const double y = a.w * b.y + a.x * b.z - a.y * b.w - a.z * b.x;
  const double z = a.w * b.z - a.x * b.y + a.y * b.x - a.z * b.w;
  return 2.0 * std::atan2(std::sqrt(x * x + y * y + z * z), std::fabs(w));
}

inline Vec3 rotate(const UnitQuat& q, const Vec3& v) {
  // v' = v + w t + u x t with t = 2 (u x v), u = (x, y, z)
  const Vec3 u{q.x, q.y, q.z};
  const Vec3 t = cross(u, v) * 2.0;
  return v + t * q.w + cross(u, t);
}

inline Mat3 quat_to_mat3(const UnitQuat& q) {
  const double ww = q.w * q.w, xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
  const double wx = q.w * q.x, wy = q.w * q.y, wz = q.w * q.z;
  const double xy = q.x * q.y, xz = q.x * q.z, yz = q.y * q.z;
  Mat3 r;
  r.m = {ww + xx - yy - zz, 2.0 * (xy - wz),   2.0 * (xz + wy),
         2.0 * (xy + wz),   ww - xx + yy - zz, 2.0 * (yz - wx),
         2.0 * (xz - wy),   2.0 * (yz + wx),   ww - xx - yy + zz};
  return r;
}

/// Shepperd's method; branch on the largest of trace and diagonal entries.
inline UnitQuat quat_from_mat3(const Mat3& r) {
  const double tr = r(0, 0) + r(1, 1) + r(2, 2);
  double w, x, y, z;
  if (tr > r(0, 0) && tr > r(1, 1) && tr > r(2, 2)) {
    const double s = std::sqrt(tr + 1.0) * 2.0;
    w = 0.25 * s;
    x = (r(2, 1) - r(1, 2)) / s;
    y = (r(0, 2) - r(2, 0)) / s;
    z = (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    const double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
    w = (r(2, 1) - r(1, 2)) / s;
    x = 0.25 * s;
    y = (r(0, 1) + r(1, 0)) / s;
    z = (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) > r(2, 2)) {
    const double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
    w = (r(0, 2) - r(2, 0)) / s;
    x = (r(0, 1) + r(1, 0)) / s;
    y = 0.25 * s;
    z = (r(1, 2) + r(2, 1)) / s;
  } else {
    const double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
    w = (r(1, 0) - r(0, 1)) / s;
    x = (r(0, 2) + r(2, 0)) / s;
    y = (r(1, 2) + r(2, 1)) / s;
    z = 0.25 * s;
  }
  return UnitQuat{w, x, y, z};
}

inline UnitQuat quat_from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 a = normalized(axis);
  const double h = 0.5 * angle;
  const double s = std::sin(h);
  return UnitQuat{std::cos(h), a.x * s, a.y * s, a.z * s};
}

/// Exponential map: rotation by |v| radians about v. Safe at v = 0.
inline UnitQuat quat_from_rotvec(const Vec3& v) {
  const double angle = norm(v);
  if (angle < 1e-12) {
    UnitQuat q;
    q.w = 1.0;
    q.x = 0.5 * v.x;
    q.y = 0.5 * v.y;
    q.z = 0.5 * v.z;
    q.renormalize();
    return q;
  }
  return quat_from_axis_angle(v, angle);
}

struct AxisAngle {
  Vec3 axis{1.0, 0.0, 0.0};
  double angle = 0.0;  // in [0, pi]
};

inline AxisAngle axis_angle_of(const UnitQuat& q_in) {
  UnitQuat q = q_in;
  if (q.w < 0.0) {  // fold the double cover so angle lands in [0, pi]
    q.w = -q.w;
    q.x = -q.x;
    q.y = -q.y;
    q.z = -q.z;
  }
  const double s = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
  AxisAngle aa;
  aa.angle = 2.0 * std::atan2(s, q.w);
  if (s > 1e-12) aa.axis = Vec3{q.x / s, q.y / s, q.z / s};
  return aa;
}

// ---------------------------------------------------------------------------
// Euler angles, intrinsic Z-Y-X (yaw about Z, then pitch about Y, then roll
// about X). This is the one Euler convention used in the project.

struct EulerZyx {
  double roll = 0.0;   // rad, about X
  double pitch = 0.0;  // rad, about Y
  double yaw = 0.0;    // rad, about Z
};

inline UnitQuat quat_from_euler(double roll, double pitch, double yaw) {
  const double cr = std::cos(0.5 * roll), sr = std::sin(0.5 * roll);
  const double cp = std::cos(0.5 * pitch), sp = std::sin(0.5 * pitch);
  const double cy = std::cos(0.5 * yaw), sy = std::sin(0.5 * yaw);
  // qz(yaw) * qy(pitch) * qx(roll)
  return UnitQuat{cy * cp * cr + sy * sp * sr, cy * cp * sr - sy * sp * cr,
                  cy * sp * cr + sy * cp * sr, sy * cp * cr - cy * sp * sr};
}

inline EulerZyx euler_from_quat(const UnitQuat& q) {
  const Mat3 r = quat_to_mat3(q);
  EulerZyx e;
  const double sp = -r(2, 0);
  e.pitch = std::asin(std::clamp(sp, -1.0, 1.0));
  if (std::fabs(sp) < 1.0 - 1e-12) {
    e.roll = std::atan2(r(2, 1), r(2, 2));
    e.yaw = std::atan2(r(1, 0), r(0, 0));
  } else {
    // gimbal lock: yaw is unobservable, fold everything into roll
    e.roll = std::atan2(-r(1, 2), r(1, 1));
    e.yaw = 0.0;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Slerp

/// Constant-angular-velocity interpolation along the shorter arc.
inline UnitQuat slerp(const UnitQuat& a, const UnitQuat& b_in, double t) {
  UnitQuat b = b_in;
  double d = quat_dot(a, b);
  if (d < 0.0) {  // shorter arc
    b.w = -b.w;
    b.x = -b.x;
    b.y = -b.y;
    b.z = -b.z;
    d = -d;
  }
  double ka, kb;
  if (d > 1.0 - 1e-10) {
    ka = 1.0 - t;  // nearly parallel: lerp, renormalized below
    kb = t;
  } else {
    const double theta = std::acos(std::min(d, 1.0));
    const double s = std::sin(theta);
    ka = std::sin((1.0 - t) * theta) / s;
    kb = std::sin(t * theta) / s;
  }
  return UnitQuat{ka * a.w + kb * b.w, ka * a.x + kb * b.x, ka * a.y + kb * b.y,
                  ka * a.z + kb * b.z};
}

// ---------------------------------------------------------------------------
// Triangle local frames

inline constexpr double kDegenerateCrossNorm = 1e-12;

namespace detail {

/// Frame columns [e1 | e2 | n] with n = (e1 x e2) / sqrt(|e1 x e2|).
/// No degeneracy check: an exactly collapsed triangle yields n = 0 and a
/// rank-deficient frame instead of NaNs.
inline Mat3 triangle_frame_unchecked(const Vec3& v1, const Vec3& v2, const Vec3& v3) {
  const Vec3 e1 = v2 - v1;
  const Vec3 e2 = v3 - v1;
  const Vec3 c = cross(e1, e2);
  const double cn = norm(c);
  Vec3 n{0.0, 0.0, 0.0};
  if (cn > 0.0) n = c * (1.0 / std::sqrt(cn));
  return Mat3::from_columns(e1, e2, n);
}

}  // namespace detail

/// Per-triangle frame with the square-root-area normal column. Throws
/// DegenerateTriangle when |e1 x e2| falls below the degeneracy threshold.
inline Mat3 triangle_frame(const Vec3& v1, const Vec3& v2, const Vec3& v3) {
  const Vec3 c = cross(v2 - v1, v3 - v1);
  if (norm(c) <= kDegenerateCrossNorm)
    throw DegenerateTriangle("triangle is degenerate (area below threshold)");
  return detail::triangle_frame_unchecked(v1, v2, v3);
}

}  // namespace imujaw
