/*
 * Copyright (C) 2026 The imujaw authors
 *
 * SPDX-License-Identifier: Apache-2.0
 * See the file LICENSE for more information.
 */

#pragma once

#include <span>

#include "imujaw/geometry.hpp"
#include "imujaw/msp.hpp"

// Turns telemetry samples into a calibrated relative rotation. Two input
// paths exist: the flight controller's own filtered ATTITUDE (the default),
// and RAW_IMU fed through a small complementary filter. Either way the
// output of this stage is the rotation of the sensor since the calibrated
// reference pose, conjugated into the rig's head frame.

namespace imujaw {

struct NonMonotoneTime : Error {
  using Error::Error;
};
struct EmptyCalibration : Error {
  using Error::Error;
};
struct NotARotation : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Configuration

/// Complementary filter parameters for the RAW_IMU path.
/// Scale defaults assume an MPU-60x0 class sensor at +/-2000 deg/s and
/// +/-16 g full range; override them from the pipeline config for other
/// hardware.
struct FilterConfig {
  double accel_blend = 0.02;                          // per-step tilt correction in [0, 1]
  double gyro_scale = deg2rad(1.0) / 16.4;            // rad/s per raw count
  double accel_scale = 9.80665 / 2048.0;              // m/s^2 per raw count
};

struct OrientationState {
  UnitQuat q;             // sensor-to-world
  double last_time = 0.0; // seconds, monotone non-decreasing across updates
};

/// Reference pose captured during calibration; all control rotations are
/// relative to it. `spread` is the largest angular deviation of any
/// calibration sample from the mean, a data-quality signal (sessions with
/// spread above ~10 degrees should be rejected).
struct ReferencePose {
  UnitQuat q_ref;
  int sample_count = 0;
  double spread = 0.0;  // radians
};

/// Sensor-to-rig axis mapping and jaw-rotation clamp. The conjugation by
/// `align` absorbs whatever physical mounting convention the IMU has; the
/// clamp keeps large hand motions from demanding anatomically absurd jaw
/// targets. Set max_angle to pi to disable clamping.
struct MappingConfig {
  Mat3 align = Mat3::identity();  // IMU frame -> rig head frame, proper rotation
  double max_angle = deg2rad(25.0);

  void validate() const {
    if (!is_rotation(align, 1e-6)) throw NotARotation("mapping.align must be a proper rotation");
    if (!(max_angle > 0.0) || max_angle > kPi)
      throw Error("mapping.max_angle must lie in (0, pi]");
  }
};

// ---------------------------------------------------------------------------
// Operations

/// ATTITUDE message (decidegrees / degrees) to a unit quaternion, Z-Y-X.
inline UnitQuat attitude_to_quat(const msp::AttitudeSample& s) {
  return quat_from_euler(deg2rad(0.1 * s.roll_decideg), deg2rad(0.1 * s.pitch_decideg),
                         deg2rad(static_cast<double>(s.yaw_deg)));
}

/// One complementary-filter step: integrate the gyro over dt, then pull the
/// estimated up-direction a fraction `accel_blend` of the way toward the
/// accelerometer's gravity direction.
inline OrientationState filter_step(const OrientationState& state, const msp::RawImuSample& s,
                                    const FilterConfig& cfg) {
  if (!(s.rx_time > state.last_time))
    throw NonMonotoneTime("raw IMU sample time does not advance");
  const double dt = s.rx_time - state.last_time;

  const Vec3 omega{s.gyro[0] * cfg.gyro_scale, s.gyro[1] * cfg.gyro_scale,
                   s.gyro[2] * cfg.gyro_scale};
  UnitQuat q = quat_mul(state.q, quat_from_rotvec(omega * dt));

  if (cfg.accel_blend > 0.0) {
    const Vec3 accel{s.accel[0] * cfg.accel_scale, s.accel[1] * cfg.accel_scale,
                     s.accel[2] * cfg.accel_scale};
    if (squared_norm(accel) > 1e-12) {
      const Vec3 up{0.0, 0.0, 1.0};
      const Vec3 v = normalized(rotate(q, accel));  // measured up, world frame
      const Vec3 axis = cross(v, up);
      const double axis_norm = norm(axis);
      const double angle = std::atan2(axis_norm, dot(v, up));
      if (axis_norm > 1e-12) {
        const UnitQuat full = quat_from_axis_angle(axis, angle);
        q = slerp(q, quat_mul(full, q), cfg.accel_blend);
      } else if (angle > kPi / 2.0) {
        // anti-parallel: any horizontal axis works
        const UnitQuat full = quat_from_axis_angle(Vec3{1.0, 0.0, 0.0}, angle);
        q = slerp(q, quat_mul(full, q), cfg.accel_blend);
      }
    }
  }

  q.renormalize();
  return OrientationState{q, s.rx_time};
}

/// Mean orientation over a calibration window. Samples are sign-aligned to
/// the first (quaternion double cover), averaged component-wise and
/// renormalized; valid in the small-spread regime a calibration hold
/// produces. `spread` reports the worst sample for quality gating.
inline ReferencePose calibrate_reference(std::span<const UnitQuat> samples) {
  if (samples.empty()) throw EmptyCalibration("calibration needs at least one sample");
  const UnitQuat& anchor = samples.front();
  double w = 0.0, x = 0.0, y = 0.0, z = 0.0;
  for (const UnitQuat& s : samples) {
    const double sign = quat_dot(anchor, s) < 0.0 ? -1.0 : 1.0;
    w += sign * s.w;
    x += sign * s.x;
    y += sign * s.y;
    z += sign * s.z;
  }
  ReferencePose ref;
  ref.q_ref = UnitQuat{w, x, y, z};
  ref.sample_count = static_cast<int>(samples.size());
  for (const UnitQuat& s : samples) ref.spread = std::max(ref.spread, quat_angle(ref.q_ref, s));
  return ref;
}

/// Rotation of the sensor since calibration: R(conj(q_ref) * q).
inline Mat3 relative_rotation(const UnitQuat& q, const ReferencePose& ref) {
  return quat_to_mat3(quat_mul(ref.q_ref.conjugate(), q));
}

/// Conjugate the relative sensor rotation into the rig head frame and clamp
/// its angle: T = align * R_rel * align^T, angle rescaled to max_angle when
/// exceeded (same axis).
inline Mat3 map_to_jaw_target(const Mat3& r_rel, const MappingConfig& cfg) {
  if (!is_rotation(r_rel, 1e-6)) throw NotARotation("relative rotation is not a proper rotation");
  const Mat3 t = cfg.align * r_rel * cfg.align.transpose();
  const AxisAngle aa = axis_angle_of(quat_from_mat3(t));
  if (aa.angle <= cfg.max_angle) return t;
  return quat_to_mat3(quat_from_axis_angle(aa.axis, cfg.max_angle));
}

}  // namespace imujaw
