/*
 * Copyright (C) 2026 The imujaw authors
 *
 * SPDX-License-Identifier: Apache-2.0
 * See the file LICENSE for more information.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <json.hpp>

#include "imujaw/geometry.hpp"
#include "imujaw/msp.hpp"

// Hardware-free telemetry source. A gesture script (keyframed orientations)
// is rendered into the same byte stream a flight controller would produce:
// MSP ATTITUDE frames at a fixed rate, optionally perturbed by seeded
// orientation noise before the protocol's decidegree/degree quantization.
// A capture file is exactly those wire bytes; replaying one means feeding
// it through the stream decoder.

namespace imujaw::sim {

struct BadRate : Error {
  using Error::Error;
};

struct Keyframe {
  double t = 0.0;  // seconds, strictly increasing across the script
  UnitQuat q;
};

struct GestureScript {
  std::vector<Keyframe> keyframes;
  bool loop = false;

  void validate() const {
    if (keyframes.empty()) throw Error("gesture script needs at least one keyframe");
    for (std::size_t i = 0; i < keyframes.size(); ++i) {
      if (!std::isfinite(keyframes[i].t)) throw Error("keyframe time is not finite");
      if (i > 0 && !(keyframes[i].t > keyframes[i - 1].t))
        throw Error("keyframe times must be strictly increasing");
    }
  }
};

/// Per-sample angular perturbation: each rotation-vector component is drawn
/// from N(0, sigma). Same seed, same stream (within one build); noise 0
/// skips the generator entirely.
struct NoiseConfig {
  double attitude_noise_deg = 0.0;
  std::uint64_t seed = 0;
};

/// Orientation at time t: clamped to the first/last keyframe outside the
/// script (loop off), slerped by normalized time between keyframes, and
/// wrapped modulo the last keyframe time when looping.
inline UnitQuat sample_script(const GestureScript& script, double t) {
  const auto& keys = script.keyframes;
  if (keys.size() == 1) return keys.front().q;
  const double last = keys.back().t;
  if (script.loop && last > 0.0) {
    t = std::fmod(t, last);
    if (t < 0.0) t += last;
  }
  if (t <= keys.front().t) return keys.front().q;
  if (t >= last) return keys.back().q;
  std::size_t hi = 1;
  while (keys[hi].t < t) ++hi;
  const Keyframe& a = keys[hi - 1];
  const Keyframe& b = keys[hi];
  const double u = (t - a.t) / (b.t - a.t);
  return slerp(a.q, b.q, u);
}

namespace detail {

inline std::int16_t round_clamp_i16(double v) {
  const double r = std::nearbyint(v);
  if (r < -32768.0) return -32768;
  if (r > 32767.0) return 32767;
  return static_cast<std::int16_t>(r);
}

}  // namespace detail

/// Encodes one orientation as an ATTITUDE payload: roll/pitch rounded to
/// decidegrees, yaw normalized to [0, 360) and rounded to whole degrees.
inline msp::Frame attitude_frame(const UnitQuat& q) {
  const EulerZyx e = euler_from_quat(q);
  double yaw_deg = rad2deg(e.yaw);
  yaw_deg = std::fmod(yaw_deg, 360.0);
  if (yaw_deg < 0.0) yaw_deg += 360.0;
  std::int16_t yaw = detail::round_clamp_i16(yaw_deg);
  if (yaw == 360) yaw = 0;

  msp::Frame f;
  f.direction = msp::Direction::FromFc;
  f.command = msp::kCmdAttitude;
  msp::write_le16(f.payload, detail::round_clamp_i16(rad2deg(e.roll) * 10.0));
  msp::write_le16(f.payload, detail::round_clamp_i16(rad2deg(e.pitch) * 10.0));
  msp::write_le16(f.payload, yaw);
  return f;
}

/// Renders floor(duration * rate) + 1 ATTITUDE frames at uniform sample
/// times i / rate. Deterministic per (script, rate, duration, noise).
inline std::vector<std::uint8_t> generate_stream(const GestureScript& script, double rate_hz,
                                                 double duration, const NoiseConfig& noise) {
  if (!(rate_hz > 0.0) || rate_hz > 10000.0) throw BadRate("rate must lie in (0, 10000] Hz");
  if (!(duration > 0.0)) throw BadRate("duration must be positive");
  script.validate();

  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> perturb(0.0, deg2rad(noise.attitude_noise_deg));
  const auto samples = static_cast<std::size_t>(duration * rate_hz) + 1;

  std::vector<std::uint8_t> out;
  out.reserve(samples * 12);
  for (std::size_t i = 0; i < samples; ++i) {
    UnitQuat q = sample_script(script, static_cast<double>(i) / rate_hz);
    if (noise.attitude_noise_deg > 0.0)
      q = quat_mul(q, quat_from_rotvec({perturb(rng), perturb(rng), perturb(rng)}));
    const auto bytes = msp::encode_frame(attitude_frame(q));
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
  return out;
}

/// Constant-rate RAW_IMU stream (fixed gyro/accel counts every sample),
/// enough to exercise the complementary filter over the wire path.
inline std::vector<std::uint8_t> generate_raw_stream(const std::array<std::int16_t, 3>& gyro,
                                                     const std::array<std::int16_t, 3>& accel,
                                                     double rate_hz, double duration) {
  if (!(rate_hz > 0.0) || rate_hz > 10000.0) throw BadRate("rate must lie in (0, 10000] Hz");
  if (!(duration > 0.0)) throw BadRate("duration must be positive");
  msp::Frame f;
  f.direction = msp::Direction::FromFc;
  f.command = msp::kCmdRawImu;
  for (int i = 0; i < 3; ++i) msp::write_le16(f.payload, accel[static_cast<std::size_t>(i)]);
  for (int i = 0; i < 3; ++i) msp::write_le16(f.payload, gyro[static_cast<std::size_t>(i)]);
  for (int i = 0; i < 3; ++i) msp::write_le16(f.payload, 0);
  const auto bytes = msp::encode_frame(f);

  const auto samples = static_cast<std::size_t>(duration * rate_hz) + 1;
  std::vector<std::uint8_t> out;
  out.reserve(samples * bytes.size());
  for (std::size_t i = 0; i < samples; ++i) out.insert(out.end(), bytes.begin(), bytes.end());
  return out;
}

inline void write_capture(const std::filesystem::path& path,
                          std::span<const std::uint8_t> stream) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open capture for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(stream.data()),
            static_cast<std::streamsize>(stream.size()));
  if (!out) throw IoError("capture write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_capture(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open capture: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// Script files: JSON with a loop flag and per-keyframe time + Euler angles
// in degrees. Angles go in as Euler for authorability; internally the
// script holds quaternions.

inline GestureScript parse_script(const nlohmann::json& doc) {
  GestureScript script;
  script.loop = doc.value("loop", false);
  if (!doc.contains("keyframes") || !doc["keyframes"].is_array())
    throw Error("gesture script needs a 'keyframes' array");
  for (const auto& k : doc["keyframes"]) {
    Keyframe key;
    key.t = k.at("t").get<double>();
    key.q = quat_from_euler(deg2rad(k.value("roll_deg", 0.0)), deg2rad(k.value("pitch_deg", 0.0)),
                            deg2rad(k.value("yaw_deg", 0.0)));
    script.keyframes.push_back(key);
  }
  script.validate();
  return script;
}

inline GestureScript load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open gesture script: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("gesture script is not valid JSON: " + std::string(e.what()));
  }
  return parse_script(doc);
}

}  // namespace imujaw::sim
