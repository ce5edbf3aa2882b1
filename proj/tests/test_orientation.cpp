/*
 * Copyright (C) 2026 The imujaw authors
 *
 * SPDX-License-Identifier: Apache-2.0
 * See the file LICENSE for more information.
 */

#include <random>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "imujaw/orientation.hpp"
#include "test_helpers.hpp"

using namespace imujaw;
using testutil::mat_dist;
using testutil::quat_dist;
using testutil::random_quat;

namespace {

msp::RawImuSample raw_sample(std::array<std::int16_t, 3> gyro, std::array<std::int16_t, 3> accel,
                             double t) {
  msp::RawImuSample s;
  s.gyro = gyro;
  s.accel = accel;
  s.rx_time = t;
  return s;
}

}  // namespace

TEST_CASE("attitude_to_quat reference values", "[orientation]") {
  msp::AttitudeSample s;
  CHECK(quat_dist(attitude_to_quat(s), UnitQuat::identity()) == 0.0);

  s.yaw_deg = 90;
  CHECK(quat_dist(attitude_to_quat(s), quat_from_axis_angle({0, 0, 1}, kPi / 2.0)) < 1e-12);

  s = msp::AttitudeSample{};
  s.roll_decideg = 1800;
  CHECK(quat_dist(attitude_to_quat(s), quat_from_axis_angle({1, 0, 0}, kPi)) < 1e-12);
}

TEST_CASE("filter_step with zero gyro and no blend is a clock update", "[orientation]") {
  FilterConfig cfg;
  cfg.accel_blend = 0.0;
  const OrientationState s0{UnitQuat::identity(), 0.0};
  const OrientationState s1 = filter_step(s0, raw_sample({0, 0, 0}, {0, 0, 2048}, 0.01), cfg);
  CHECK(s1.q == s0.q);
  CHECK(s1.last_time == 0.01);
}

TEST_CASE("filter_step integrates a constant rate to 2 rad over 2 s at 1 kHz", "[orientation]") {
  FilterConfig cfg;
  cfg.accel_blend = 0.0;
  cfg.gyro_scale = 0.001;  // 1000 counts = 1 rad/s
  OrientationState state{UnitQuat::identity(), 0.0};
  for (int i = 1; i <= 2000; ++i)
    state = filter_step(state, raw_sample({0, 0, 1000}, {0, 0, 0}, i * 1e-3), cfg);
  const AxisAngle aa = axis_angle_of(quat_from_mat3(quat_to_mat3(state.q)));
  CHECK(aa.angle == Catch::Approx(2.0).margin(1e-3));
  CHECK(norm(aa.axis - Vec3{0, 0, 1}) < 1e-9);
}

TEST_CASE("full blend removes a tilt in one step", "[orientation]") {
  FilterConfig cfg;
  cfg.accel_blend = 1.0;
  cfg.accel_scale = 9.80665 / 2048.0;
  // estimate is tilted 10 degrees while the sensor actually sits level
  const UnitQuat tilted = quat_from_axis_angle({0, 1, 0}, deg2rad(10.0));
  const OrientationState s0{tilted, 0.0};
  const OrientationState s1 = filter_step(s0, raw_sample({0, 0, 0}, {0, 0, 2048}, 0.01), cfg);
  CHECK(quat_dist(s1.q, UnitQuat::identity()) < 1e-6);
}

TEST_CASE("filter_step requires advancing time", "[orientation]") {
  FilterConfig cfg;
  const OrientationState s{UnitQuat::identity(), 1.0};
  CHECK_THROWS_AS(filter_step(s, raw_sample({0, 0, 0}, {0, 0, 0}, 1.0), cfg), NonMonotoneTime);
  CHECK_THROWS_AS(filter_step(s, raw_sample({0, 0, 0}, {0, 0, 0}, 0.5), cfg), NonMonotoneTime);
}

TEST_CASE("filter_step keeps the quaternion unit over long random runs", "[orientation]") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> counts(-2000, 2000);
  std::uniform_real_distribution<double> dt(1e-4, 2e-3);
  FilterConfig cfg;
  cfg.accel_blend = 0.02;
  OrientationState state{UnitQuat::identity(), 0.0};
  double t = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    t += dt(rng);
    const auto g = std::array<std::int16_t, 3>{static_cast<std::int16_t>(counts(rng)),
                                               static_cast<std::int16_t>(counts(rng)),
                                               static_cast<std::int16_t>(counts(rng))};
    const auto a = std::array<std::int16_t, 3>{static_cast<std::int16_t>(counts(rng)),
                                               static_cast<std::int16_t>(counts(rng)),
                                               static_cast<std::int16_t>(counts(rng))};
    state = filter_step(state, raw_sample(g, a, t), cfg);
    const double n2 = state.q.w * state.q.w + state.q.x * state.q.x + state.q.y * state.q.y +
                      state.q.z * state.q.z;
    if (std::fabs(n2 - 1.0) > 2e-9) {  // CHECK once per violation to keep the loop fast
      REQUIRE(std::fabs(std::sqrt(n2) - 1.0) <= 1e-9);
    }
  }
  SUCCEED("norm stayed within 1e-9 of 1 over 1e6 steps");
}

TEST_CASE("gyro-only filtering matches closed-form integration", "[orientation]") {
  // piecewise-constant rates about changing axes, alpha = 0
  FilterConfig cfg;
  cfg.accel_blend = 0.0;
  cfg.gyro_scale = 0.001;
  OrientationState state{UnitQuat::identity(), 0.0};
  UnitQuat expect = UnitQuat::identity();
  double t = 0.0;
  const std::array<std::array<std::int16_t, 3>, 3> segments{
      {{1000, 0, 0}, {0, -500, 0}, {0, 0, 250}}};
  for (const auto& g : segments) {
    for (int i = 1; i <= 1000; ++i) {
      t += 1e-3;
      state = filter_step(state, raw_sample(g, {0, 0, 0}, t), cfg);
    }
    const Vec3 omega{g[0] * 0.001, g[1] * 0.001, g[2] * 0.001};
    expect = quat_mul(expect, quat_from_rotvec(omega * 1.0));
  }
  CHECK(quat_angle(state.q, expect) < 1e-3);
}

TEST_CASE("calibrate_reference basics", "[orientation]") {
  std::mt19937_64 rng(22);
  const UnitQuat q = random_quat(rng);

  const std::vector<UnitQuat> same(5, q);
  const ReferencePose ref = calibrate_reference(same);
  CHECK(quat_dist(ref.q_ref, q) < 1e-15);
  CHECK(ref.spread == Catch::Approx(0.0).margin(1e-9));
  CHECK(ref.sample_count == 5);

  CHECK_THROWS_AS(calibrate_reference(std::vector<UnitQuat>{}), EmptyCalibration);
}

TEST_CASE("calibrate_reference averages symmetric perturbations away", "[orientation]") {
  std::mt19937_64 rng(23);
  const UnitQuat q = random_quat(rng);
  const double eps = deg2rad(3.0);
  const std::vector<UnitQuat> samples{quat_mul(q, quat_from_axis_angle({0, 1, 0}, +eps)),
                                      quat_mul(q, quat_from_axis_angle({0, 1, 0}, -eps))};
  const ReferencePose ref = calibrate_reference(samples);
  CHECK(quat_dist(ref.q_ref, q) < 1e-9);
  CHECK(ref.spread == Catch::Approx(eps).margin(1e-9));
}

TEST_CASE("calibrate_reference folds the double cover", "[orientation]") {
  std::mt19937_64 rng(24);
  const UnitQuat q = random_quat(rng);
  UnitQuat minus = q;
  minus.w = -minus.w;
  minus.x = -minus.x;
  minus.y = -minus.y;
  minus.z = -minus.z;
  const std::vector<UnitQuat> samples{q, minus};
  const ReferencePose ref = calibrate_reference(samples);
  CHECK(quat_dist(ref.q_ref, q) < 1e-15);
  CHECK(ref.spread == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("relative_rotation reference values", "[orientation]") {
  std::mt19937_64 rng(25);
  const UnitQuat q = random_quat(rng);
  ReferencePose ref;
  ref.q_ref = q;

  CHECK(mat_dist(relative_rotation(q, ref), Mat3::identity()) < 1e-12);

  const UnitQuat x30 = quat_from_axis_angle({1, 0, 0}, deg2rad(30.0));
  CHECK(mat_dist(relative_rotation(quat_mul(q, x30), ref), quat_to_mat3(x30)) < 1e-9);
}

TEST_CASE("relative rotations compose", "[orientation]") {
  // With R_rel = R(conj(q_ref) * q), successive relatives chain as
  // rel(ref -> q1) * rel(q1 -> q2) = rel(ref -> q2).
  std::mt19937_64 rng(26);
  for (int i = 0; i < 50; ++i) {
    const UnitQuat qref = random_quat(rng);
    const UnitQuat q1 = random_quat(rng);
    const UnitQuat q2 = random_quat(rng);
    ReferencePose ref;
    ref.q_ref = qref;
    ReferencePose ref1;
    ref1.q_ref = q1;
    const Mat3 lhs = relative_rotation(q1, ref) * relative_rotation(q2, ref1);
    const Mat3 rhs = relative_rotation(q2, ref);
    CHECK(mat_dist(lhs, rhs) < 1e-9);
  }
}

TEST_CASE("map_to_jaw_target passthrough and clamp", "[orientation]") {
  std::mt19937_64 rng(27);
  MappingConfig cfg;
  cfg.max_angle = deg2rad(30.0);

  // identity in, identity out, for any alignment
  cfg.align = quat_to_mat3(random_quat(rng));
  CHECK(mat_dist(map_to_jaw_target(Mat3::identity(), cfg), Mat3::identity()) < 1e-12);

  cfg.align = Mat3::identity();
  const Mat3 x20 = quat_to_mat3(quat_from_axis_angle({1, 0, 0}, deg2rad(20.0)));
  CHECK(mat_dist(map_to_jaw_target(x20, cfg), x20) < 1e-12);

  const Mat3 x90 = quat_to_mat3(quat_from_axis_angle({1, 0, 0}, deg2rad(90.0)));
  const Mat3 x30 = quat_to_mat3(quat_from_axis_angle({1, 0, 0}, deg2rad(30.0)));
  CHECK(mat_dist(map_to_jaw_target(x90, cfg), x30) < 1e-12);
}

TEST_CASE("map_to_jaw_target clamps angle and conjugates the axis", "[orientation]") {
  std::mt19937_64 rng(28);
  MappingConfig cfg;
  cfg.max_angle = deg2rad(25.0);
  std::uniform_real_distribution<double> angle(0.01, 3.0);
  for (int i = 0; i < 100; ++i) {
    cfg.align = quat_to_mat3(random_quat(rng));
    const Vec3 axis = normalized(testutil::random_vec(rng) + Vec3{0.01, 0.02, 0.03});
    const double a = angle(rng);
    const Mat3 rel = quat_to_mat3(quat_from_axis_angle(axis, a));
    const Mat3 t = map_to_jaw_target(rel, cfg);

    const AxisAngle got = axis_angle_of(quat_from_mat3(t));
    CHECK(got.angle <= cfg.max_angle + 1e-9);
    CHECK(is_rotation(t, 1e-9));
    // conjugation maps the rotation axis through align
    const Vec3 expect_axis = cfg.align * axis;
    CHECK(norm(got.axis - expect_axis) < 1e-9);
  }
}

TEST_CASE("map_to_jaw_target rejects non-rotations", "[orientation]") {
  MappingConfig cfg;
  Mat3 bad = Mat3::identity();
  bad(0, 0) = 1.5;
  CHECK_THROWS_AS(map_to_jaw_target(bad, cfg), NotARotation);
}

TEST_CASE("mapping config validation", "[orientation]") {
  MappingConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.align(0, 0) = 2.0;
  CHECK_THROWS_AS(cfg.validate(), NotARotation);
}
