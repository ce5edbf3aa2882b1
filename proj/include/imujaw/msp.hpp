/*
 * Copyright (C) 2026 The imujaw authors
 *
 * SPDX-License-Identifier: Apache-2.0
 * See the file LICENSE for more information.
 */

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "imujaw/error.hpp"

// MultiWii Serial Protocol v1 framing, as spoken by BetaFlight flight
// controllers. A frame on the wire is
//
//   '$' 'M' dir size command payload... checksum
//
// where dir is '<' (to the FC) or '>' (from the FC) and checksum is the XOR
// of size, command and every payload byte. Only v1 and the two telemetry
// commands this project consumes (RAW_IMU = 102, ATTITUDE = 108) are
// implemented; configuration writes and MSP v2 are out of scope.

namespace imujaw::msp {

struct PayloadTooLong : Error {
  using Error::Error;
};
struct WrongCommand : Error {
  using Error::Error;
};
struct BadLength : Error {
  using Error::Error;
};

inline constexpr std::uint8_t kHeaderByte0 = 0x24;  // '$'
inline constexpr std::uint8_t kHeaderByte1 = 0x4D;  // 'M'
inline constexpr std::uint8_t kCmdRawImu = 102;
inline constexpr std::uint8_t kCmdAttitude = 108;

enum class Direction : std::uint8_t {
  ToFc = 0x3C,    // '<'
  FromFc = 0x3E,  // '>'
};

struct Frame {
  Direction direction = Direction::ToFc;
  std::uint8_t command = 0;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const Frame&, const Frame&) = default;
};

inline std::uint8_t frame_checksum(std::uint8_t size, std::uint8_t command,
                                   std::span<const std::uint8_t> payload) {
  std::uint8_t cs = static_cast<std::uint8_t>(size ^ command);
  for (std::uint8_t b : payload) cs = static_cast<std::uint8_t>(cs ^ b);
  return cs;
}

inline std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  if (frame.payload.size() > 255) throw PayloadTooLong("MSP v1 payload exceeds 255 bytes");
  const auto size = static_cast<std::uint8_t>(frame.payload.size());
  std::vector<std::uint8_t> out;
  out.reserve(6 + frame.payload.size());
  out.push_back(kHeaderByte0);
  out.push_back(kHeaderByte1);
  out.push_back(static_cast<std::uint8_t>(frame.direction));
  out.push_back(size);
  out.push_back(frame.command);
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  out.push_back(frame_checksum(size, frame.command, frame.payload));
  return out;
}

// ---------------------------------------------------------------------------
// Telemetry payloads. rx_time is injected by the caller's clock so decoding
// stays deterministic under replay; the codec never reads a global clock.

/// ATTITUDE (command 108): filtered Euler attitude from the flight
/// controller. Units follow the protocol: roll/pitch in decidegrees,
/// yaw in whole degrees.
struct AttitudeSample {
  std::int16_t roll_decideg = 0;   // [-1800, 1800]
  std::int16_t pitch_decideg = 0;  // [-1800, 1800]
  std::int16_t yaw_deg = 0;        // [0, 360)
  double rx_time = 0.0;            // seconds, monotonic
};

/// RAW_IMU (command 102): unfiltered sensor counts, nine little-endian
/// int16 values in the order accel xyz, gyro xyz, mag xyz.
struct RawImuSample {
  std::array<std::int16_t, 3> accel{};
  std::array<std::int16_t, 3> gyro{};
  std::array<std::int16_t, 3> mag{};
  double rx_time = 0.0;
};

inline std::int16_t read_le16(std::span<const std::uint8_t> bytes, std::size_t offset) {
  const auto lo = static_cast<std::uint16_t>(bytes[offset]);
  const auto hi = static_cast<std::uint16_t>(bytes[offset + 1]);
  return static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
}

inline void write_le16(std::vector<std::uint8_t>& out, std::int16_t value) {
  const auto u = static_cast<std::uint16_t>(value);
  out.push_back(static_cast<std::uint8_t>(u & 0xFF));
  out.push_back(static_cast<std::uint8_t>(u >> 8));
}

namespace detail {

inline std::int16_t wrap_decideg(int v) {
  int r = (v + 1800) % 3600;
  if (r < 0) r += 3600;
  return static_cast<std::int16_t>(r - 1800);
}

inline std::int16_t wrap_yaw_deg(int v) {
  int r = v % 360;
  if (r < 0) r += 360;
  return static_cast<std::int16_t>(r);
}

}  // namespace detail

inline AttitudeSample parse_attitude(const Frame& frame, double rx_time) {
  if (frame.command != kCmdAttitude) throw WrongCommand("expected ATTITUDE (108) frame");
  if (frame.payload.size() != 6) throw BadLength("ATTITUDE payload must be 6 bytes");
  AttitudeSample s;
  s.roll_decideg = detail::wrap_decideg(read_le16(frame.payload, 0));
  s.pitch_decideg = detail::wrap_decideg(read_le16(frame.payload, 2));
  s.yaw_deg = detail::wrap_yaw_deg(read_le16(frame.payload, 4));
  s.rx_time = rx_time;
  return s;
}

inline RawImuSample parse_raw_imu(const Frame& frame, double rx_time) {
  if (frame.command != kCmdRawImu) throw WrongCommand("expected RAW_IMU (102) frame");
  if (frame.payload.size() != 18) throw BadLength("RAW_IMU payload must be 18 bytes");
  RawImuSample s;
  for (int i = 0; i < 3; ++i) s.accel[i] = read_le16(frame.payload, 2 * i);
  for (int i = 0; i < 3; ++i) s.gyro[i] = read_le16(frame.payload, 6 + 2 * i);
  for (int i = 0; i < 3; ++i) s.mag[i] = read_le16(frame.payload, 12 + 2 * i);
  s.rx_time = rx_time;
  return s;
}

// ---------------------------------------------------------------------------
// Streaming decoder

/// Resynchronizing frame scanner. Feed arbitrary byte chunks; complete,
/// checksum-valid frames come out. Partial frames are held across calls.
/// On a checksum failure the frame is dropped and scanning resumes at the
/// byte after the failed header, so a '$M' buried inside the bad frame is
/// still found. Corruption is counted, never thrown.
///
/// Single-owner mutable state: one decoder per byte source.
class StreamDecoder {
 public:
  std::vector<Frame> consume(std::span<const std::uint8_t> chunk) {
    buf_.insert(buf_.end(), chunk.begin(), chunk.end());
    std::vector<Frame> out;
    std::size_t pos = 0;
    for (;;) {
      // hunt for the next '$'
      while (pos < buf_.size() && buf_[pos] != kHeaderByte0) {
        ++pos;
        ++bytes_skipped_;
      }
      const std::size_t avail = buf_.size() - pos;
      if (avail < 2) break;
      if (buf_[pos + 1] != kHeaderByte1) {
        ++pos;
        ++bytes_skipped_;
        continue;
      }
      if (avail < 3) break;
      const std::uint8_t dir = buf_[pos + 2];
      if (dir != static_cast<std::uint8_t>(Direction::ToFc) &&
          dir != static_cast<std::uint8_t>(Direction::FromFc)) {
        ++pos;
        ++bytes_skipped_;
        continue;
      }
      if (avail < 5) break;
      const std::uint8_t size = buf_[pos + 3];
      const std::size_t need = 6u + size;
      if (avail < need) break;  // partial frame, wait for more bytes
      const std::uint8_t command = buf_[pos + 4];
      const std::span<const std::uint8_t> payload{buf_.data() + pos + 5, size};
      if (frame_checksum(size, command, payload) == buf_[pos + 5 + size]) {
        Frame f;
        f.direction = static_cast<Direction>(dir);
        f.command = command;
        f.payload.assign(payload.begin(), payload.end());
        out.push_back(std::move(f));
        ++frames_ok_;
        pos += need;
      } else {
        ++frames_bad_checksum_;
        ++pos;  // resync at the byte after the failed header
        ++bytes_skipped_;
      }
    }
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos));
    return out;
  }

  std::uint64_t frames_ok() const { return frames_ok_; }
  std::uint64_t frames_bad_checksum() const { return frames_bad_checksum_; }
  std::uint64_t bytes_skipped() const { return bytes_skipped_; }

 private:
  std::vector<std::uint8_t> buf_;
  std::uint64_t frames_ok_ = 0;
  std::uint64_t frames_bad_checksum_ = 0;
  std::uint64_t bytes_skipped_ = 0;
};

}  // namespace imujaw::msp
