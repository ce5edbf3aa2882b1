/*
 * Copyright (C) 2026 The imujaw authors
 *
 * SPDX-License-Identifier: Apache-2.0
 * See the file LICENSE for more information.
 */

#pragma once

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <termios.h>
#include <unistd.h>

#include <json.hpp>

#include "imujaw/orientation.hpp"
#include "imujaw/procedural_rigs.hpp"
#include "imujaw/transfer.hpp"

// The end-to-end executable core: byte sources (capture file, TCP endpoint,
// serial device), the calibration phase, the streaming solve loop and its
// outputs (weights CSV, OBJ frame sequence), plus run metrics.
//
// Ingestion and solving run in separate threads joined by a single-slot
// newest-wins mailbox: for live control a stale orientation is worse than a
// dropped frame. File sources can instead run in lock-step (every sample
// solved, no drops) for deterministic replay.

namespace imujaw::pipeline {

struct ConfigError : Error {
  using Error::Error;
};
struct SourceUnavailable : Error {
  using Error::Error;
};
struct CalibrationFailed : Error {
  using Error::Error;
};
struct RigLoadError : Error {
  using Error::Error;
};

/// Calibration windows with more angular spread than this abort the run.
inline constexpr double kMaxCalibrationSpread = deg2rad(10.0);

// ---------------------------------------------------------------------------
// Byte sources

struct SourceSpec {
  enum class Kind { File, Tcp, Serial };
  Kind kind = Kind::File;
  std::string target;  // file path, host, or device path
  int port_or_baud = 0;
};

/// Parses "file:<path>", "tcp:<host>:<port>" or "serial:<dev>:<baud>".
inline SourceSpec parse_source_spec(const std::string& spec) {
  const auto fail = [&spec]() -> SourceSpec {
    throw ConfigError("malformed source '" + spec +
                      "' (expected file:<path>, tcp:<host>:<port> or serial:<dev>:<baud>)");
  };
  const std::size_t colon = spec.find(':');
  if (colon == std::string::npos) return fail();
  const std::string kind = spec.substr(0, colon);
  const std::string rest = spec.substr(colon + 1);
  SourceSpec out;
  if (kind == "file") {
    if (rest.empty()) return fail();
    out.kind = SourceSpec::Kind::File;
    out.target = rest;
    return out;
  }
  const std::size_t last = rest.rfind(':');
  if (last == std::string::npos || last == 0 || last + 1 >= rest.size()) return fail();
  int number = 0;
  try {
    number = std::stoi(rest.substr(last + 1));
  } catch (const std::exception&) {
    return fail();
  }
  out.target = rest.substr(0, last);
  out.port_or_baud = number;
  if (kind == "tcp") {
    if (number <= 0 || number > 65535) return fail();
    out.kind = SourceSpec::Kind::Tcp;
    return out;
  }
  if (kind == "serial") {
    if (number <= 0) return fail();
    out.kind = SourceSpec::Kind::Serial;
    return out;
  }
  return fail();
}

/// A stream of raw bytes. read() returns 0 either because nothing is
/// available yet (eof() false) or because the source ended (eof() true).
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual std::size_t read(std::uint8_t* dst, std::size_t cap) = 0;
  virtual bool eof() const = 0;
};

class FileSource final : public ByteSource {
 public:
  explicit FileSource(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw SourceUnavailable("cannot open capture file: " + path.string());
  }
  std::size_t read(std::uint8_t* dst, std::size_t cap) override {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(cap));
    return static_cast<std::size_t>(in_.gcount());
  }
  bool eof() const override { return in_.eof(); }

 private:
  std::ifstream in_;
};

class TcpSource final : public ByteSource {
 public:
  TcpSource(const std::string& host, int port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || res == nullptr)
      throw SourceUnavailable("cannot resolve tcp host: " + host);
    int fd = -1;
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
      fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    freeaddrinfo(res);
    if (fd < 0) throw SourceUnavailable("cannot connect to tcp://" + host + ":" + service);
    timeval tv{};
    tv.tv_usec = 100 * 1000;  // poll every 100 ms so shutdown stays responsive
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    fd_ = fd;
  }
  ~TcpSource() override {
    if (fd_ >= 0) ::close(fd_);
  }
  TcpSource(const TcpSource&) = delete;
  TcpSource& operator=(const TcpSource&) = delete;

  std::size_t read(std::uint8_t* dst, std::size_t cap) override {
    const ssize_t n = ::recv(fd_, dst, cap, 0);
    if (n > 0) return static_cast<std::size_t>(n);
    if (n == 0) {
      eof_ = true;  // orderly shutdown by the peer
      return 0;
    }
    if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) return 0;
    eof_ = true;
    return 0;
  }
  bool eof() const override { return eof_; }

 private:
  int fd_ = -1;
  bool eof_ = false;
};

class SerialSource final : public ByteSource {
 public:
  SerialSource(const std::string& device, int baud) {
    fd_ = ::open(device.c_str(), O_RDONLY | O_NOCTTY);
    if (fd_ < 0) throw SourceUnavailable("cannot open serial device: " + device);
    termios tio{};
    if (tcgetattr(fd_, &tio) != 0) {
      ::close(fd_);
      throw SourceUnavailable("not a terminal device: " + device);
    }
    cfmakeraw(&tio);
    cfsetispeed(&tio, baud_constant(baud));
    cfsetospeed(&tio, baud_constant(baud));
    tio.c_cc[VMIN] = 0;   // read returns whatever arrived
    tio.c_cc[VTIME] = 1;  // ... after at most 100 ms
    if (tcsetattr(fd_, TCSANOW, &tio) != 0) {
      ::close(fd_);
      throw SourceUnavailable("cannot configure serial device: " + device);
    }
  }
  ~SerialSource() override {
    if (fd_ >= 0) ::close(fd_);
  }
  SerialSource(const SerialSource&) = delete;
  SerialSource& operator=(const SerialSource&) = delete;

  std::size_t read(std::uint8_t* dst, std::size_t cap) override {
    const ssize_t n = ::read(fd_, dst, cap);
    if (n > 0) return static_cast<std::size_t>(n);
    if (n == 0) return 0;  // VTIME expired; a serial line never EOFs
    if (errno == EINTR || errno == EAGAIN) return 0;
    eof_ = true;  // device went away
    return 0;
  }
  bool eof() const override { return eof_; }

  static speed_t baud_constant(int baud) {
    switch (baud) {
      case 9600: return B9600;
      case 19200: return B19200;
      case 38400: return B38400;
      case 57600: return B57600;
      case 115200: return B115200;
      case 230400: return B230400;
      case 460800: return B460800;
      case 921600: return B921600;
      case 1000000: return B1000000;
      default: throw ConfigError("unsupported baud rate: " + std::to_string(baud));
    }
  }

 private:
  int fd_ = -1;
  bool eof_ = false;
};

inline std::unique_ptr<ByteSource> open_source(const SourceSpec& spec) {
  switch (spec.kind) {
    case SourceSpec::Kind::File: return std::make_unique<FileSource>(spec.target);
    case SourceSpec::Kind::Tcp: return std::make_unique<TcpSource>(spec.target, spec.port_or_baud);
    case SourceSpec::Kind::Serial:
      return std::make_unique<SerialSource>(spec.target, spec.port_or_baud);
  }
  throw ConfigError("unreachable source kind");
}

// ---------------------------------------------------------------------------
// Configuration

struct PipelineConfig {
  std::string source;         // file:<path> | tcp:<host>:<port> | serial:<dev>:<baud>
  std::string rig_manifest;
  double calibration_duration = 2.0;  // seconds
  MappingConfig mapping;
  SolveConfig solve;
  double smoothing = 0.0;     // exponential weight smoothing in [0, 1); 0 = off
  std::string weights_csv;    // empty = no CSV output
  std::string frames_dir;     // empty = no OBJ sequence
  int frame_stride = 1;       // export every Nth solved frame
  double max_rate_hz = 0.0;   // cap on solved frames per second; 0 = uncapped
  bool replay_lockstep = false;  // file sources only: solve every sample, no drops
  double replay_rate_hz = 100.0;  // assumed sample rate of capture files (they carry no clock)
  bool use_raw_imu = false;   // RAW_IMU + complementary filter instead of ATTITUDE
  FilterConfig filter;

  void validate() const {
    if (source.empty()) throw ConfigError("config needs a source");
    parse_source_spec(source);
    if (rig_manifest.empty()) throw ConfigError("config needs a rig manifest");
    if (!(calibration_duration > 0.0)) throw ConfigError("calibration duration must be positive");
    if (frame_stride < 1) throw ConfigError("frame stride must be >= 1");
    if (!(smoothing >= 0.0) || smoothing >= 1.0) throw ConfigError("smoothing must lie in [0, 1)");
    if (!(replay_rate_hz > 0.0)) throw ConfigError("replay rate must be positive");
    if (!(max_rate_hz >= 0.0)) throw ConfigError("max rate must be >= 0");
    if (!(solve.lambda >= 0.0) || !std::isfinite(solve.lambda))
      throw ConfigError("lambda must be finite and >= 0");
    if (!(filter.accel_blend >= 0.0) || filter.accel_blend > 1.0)
      throw ConfigError("filter accel_blend must lie in [0, 1]");
    if (!(filter.gyro_scale > 0.0) || !(filter.accel_scale > 0.0))
      throw ConfigError("filter scales must be positive");
    try {
      mapping.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
};

inline PipelineConfig config_from_json(const nlohmann::json& doc) {
  PipelineConfig cfg;
  try {
    cfg.source = doc.value("source", cfg.source);
    cfg.rig_manifest = doc.value("rig", cfg.rig_manifest);
    cfg.calibration_duration = doc.value("calibration_duration_s", cfg.calibration_duration);
    cfg.smoothing = doc.value("smoothing", cfg.smoothing);
    cfg.max_rate_hz = doc.value("max_rate_hz", cfg.max_rate_hz);
    cfg.replay_lockstep = doc.value("replay_lockstep", cfg.replay_lockstep);
    cfg.replay_rate_hz = doc.value("replay_rate_hz", cfg.replay_rate_hz);
    cfg.use_raw_imu = doc.value("use_raw_imu", cfg.use_raw_imu);
    if (doc.contains("mapping")) {
      const auto& m = doc["mapping"];
      cfg.mapping.max_angle = deg2rad(m.value("max_angle_deg", rad2deg(cfg.mapping.max_angle)));
      if (m.contains("align")) {
        const auto& rows = m["align"];
        if (!rows.is_array() || rows.size() != 3) throw ConfigError("mapping.align must be 3 rows");
        for (int r = 0; r < 3; ++r) {
          if (!rows[r].is_array() || rows[r].size() != 3)
            throw ConfigError("mapping.align rows must have 3 entries");
          for (int c = 0; c < 3; ++c) cfg.mapping.align(r, c) = rows[r][c].get<double>();
        }
      }
    }
    if (doc.contains("solve")) {
      const auto& s = doc["solve"];
      cfg.solve.lambda = s.value("lambda", cfg.solve.lambda);
      cfg.solve.clamp = s.value("clamp", cfg.solve.clamp);
    }
    if (doc.contains("outputs")) {
      const auto& o = doc["outputs"];
      cfg.weights_csv = o.value("weights_csv", cfg.weights_csv);
      cfg.frames_dir = o.value("frames_dir", cfg.frames_dir);
      cfg.frame_stride = o.value("frame_stride", cfg.frame_stride);
    }
    if (doc.contains("filter")) {
      const auto& f = doc["filter"];
      cfg.filter.accel_blend = f.value("accel_blend", cfg.filter.accel_blend);
      cfg.filter.gyro_scale = f.value("gyro_scale", cfg.filter.gyro_scale);
      cfg.filter.accel_scale = f.value("accel_scale", cfg.filter.accel_scale);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad config value: " + std::string(e.what()));
  }
  return cfg;
}

inline nlohmann::json config_to_json(const PipelineConfig& cfg) {
  nlohmann::json doc;
  doc["source"] = cfg.source;
  doc["rig"] = cfg.rig_manifest;
  doc["calibration_duration_s"] = cfg.calibration_duration;
  doc["smoothing"] = cfg.smoothing;
  doc["max_rate_hz"] = cfg.max_rate_hz;
  doc["replay_lockstep"] = cfg.replay_lockstep;
  doc["replay_rate_hz"] = cfg.replay_rate_hz;
  doc["use_raw_imu"] = cfg.use_raw_imu;
  doc["mapping"]["max_angle_deg"] = rad2deg(cfg.mapping.max_angle);
  doc["mapping"]["align"] = {
      {cfg.mapping.align(0, 0), cfg.mapping.align(0, 1), cfg.mapping.align(0, 2)},
      {cfg.mapping.align(1, 0), cfg.mapping.align(1, 1), cfg.mapping.align(1, 2)},
      {cfg.mapping.align(2, 0), cfg.mapping.align(2, 1), cfg.mapping.align(2, 2)}};
  doc["solve"]["lambda"] = cfg.solve.lambda;
  doc["solve"]["clamp"] = cfg.solve.clamp;
  doc["outputs"]["weights_csv"] = cfg.weights_csv;
  doc["outputs"]["frames_dir"] = cfg.frames_dir;
  doc["outputs"]["frame_stride"] = cfg.frame_stride;
  doc["filter"]["accel_blend"] = cfg.filter.accel_blend;
  doc["filter"]["gyro_scale"] = cfg.filter.gyro_scale;
  doc["filter"]["accel_scale"] = cfg.filter.accel_scale;
  return doc;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return config_from_json(doc);
}

// ---------------------------------------------------------------------------
// Metrics and outputs

struct RunMetrics {
  std::uint64_t frames_in = 0;       // telemetry samples decoded on the active path
  std::uint64_t frames_solved = 0;
  std::uint64_t frames_dropped = 0;  // newest-wins overwrites plus rate-cap skips
  std::uint64_t bad_checksums = 0;
  double latency_p50 = 0.0;  // decode-to-solve seconds
  double latency_p95 = 0.0;
  double latency_p99 = 0.0;
  double wall_time = 0.0;
};

struct WeightRow {
  double time = 0.0;
  std::vector<double> weights;
  double residual = 0.0;
};

/// Linearly interpolated quantile of an ascending-sorted sample.
inline double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  if (sorted.size() == 1) return sorted.front();
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + (sorted[lo + 1] - sorted[lo]) * frac;
}

/// Header `time,<shape names...>,residual`, one full-precision row per
/// solved frame.
inline void write_weights_csv(const std::filesystem::path& path,
                              std::span<const std::string> names,
                              std::span<const WeightRow> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open weights csv for writing: " + path.string());
  out << "time";
  for (const auto& n : names) out << ',' << n;
  out << ",residual\n";
  char buf[64];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", row.time);
    out << buf;
    for (double w : row.weights) {
      std::snprintf(buf, sizeof(buf), ",%.17g", w);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.17g\n", row.residual);
    out << buf;
  }
  if (!out) throw IoError("weights csv write failed: " + path.string());
}

/// Applies every stride-th solution to the rig and writes
/// frame_000000.obj, frame_000001.obj, ... into dir.
inline void export_frames(const BlendshapeRig& rig, std::span<const WeightRow> solutions,
                          const std::filesystem::path& dir, int stride) {
  if (stride < 1) throw Error("frame stride must be >= 1");
  std::filesystem::create_directories(dir);
  std::size_t file_index = 0;
  for (std::size_t i = 0; i < solutions.size(); i += static_cast<std::size_t>(stride)) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.obj", file_index++);
    export_obj(apply_weights(rig, solutions[i].weights), dir / name);
  }
}

// ---------------------------------------------------------------------------
// Newest-wins mailbox between the ingest and solve threads

namespace detail {

struct OrientationSample {
  UnitQuat q;
  double rx_time = 0.0;
  std::chrono::steady_clock::time_point decoded_at;
};

/// Converts decoded telemetry frames of the active command into orientation
/// samples. The raw-IMU path owns the complementary filter; its first
/// sample only initializes the filter clock and yields nothing.
struct TelemetryFeed {
  bool use_raw = false;
  FilterConfig filter;
  OrientationState state;
  bool filter_ready = false;

  std::uint8_t active_command() const { return use_raw ? msp::kCmdRawImu : msp::kCmdAttitude; }

  std::optional<OrientationSample> push(const msp::Frame& f, double rx_time,
                                        std::chrono::steady_clock::time_point decoded_at) {
    if (!use_raw)
      return OrientationSample{attitude_to_quat(msp::parse_attitude(f, rx_time)), rx_time,
                               decoded_at};
    const msp::RawImuSample raw = msp::parse_raw_imu(f, rx_time);
    if (!filter_ready) {
      state = OrientationState{UnitQuat::identity(), rx_time};
      filter_ready = true;
      return std::nullopt;
    }
    state = filter_step(state, raw, filter);
    return OrientationSample{state.q, rx_time, decoded_at};
  }
};

class LatestMailbox {
 public:
  void put(const OrientationSample& s) {
    {
      std::lock_guard lock(mutex_);
      if (slot_.has_value()) ++dropped_;
      slot_ = s;
    }
    cv_.notify_one();
  }

  std::optional<OrientationSample> take(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [this] { return slot_.has_value() || closed_; });
    if (!slot_.has_value()) return std::nullopt;
    auto s = std::move(*slot_);
    slot_.reset();
    return s;
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed_and_drained() const {
    std::lock_guard lock(mutex_);
    return closed_ && !slot_.has_value();
  }

  std::uint64_t dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
  }

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::optional<OrientationSample> slot_;
  std::uint64_t dropped_ = 0;
  bool closed_ = false;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// The pipeline

/// Runs the full chain: calibrate a reference pose over the first
/// `calibration_duration` seconds of samples, then per sample
/// relative rotation -> jaw target -> rhs -> solve -> outputs. Returns on
/// source end or when *stop becomes true (graceful flush either way).
/// Throws CalibrationFailed when the calibration window's spread exceeds
/// 10 degrees (no outputs are written in that case).
inline RunMetrics run(const PipelineConfig& cfg, const std::atomic<bool>* stop = nullptr) {
  using clock = std::chrono::steady_clock;
  const auto wall_start = clock::now();

  cfg.validate();
  const SourceSpec spec = parse_source_spec(cfg.source);
  if (cfg.replay_lockstep && spec.kind != SourceSpec::Kind::File)
    throw ConfigError("replay_lockstep requires a file source");

  RigBundle bundle;
  DtSystem sys;
  try {
    bundle = load_manifest(cfg.rig_manifest);
    sys = build_system(bundle.rig, bundle.mask, cfg.solve);
  } catch (const Error& e) {
    throw RigLoadError(e.what());
  }

  auto src = open_source(spec);

  RunMetrics metrics;
  std::vector<WeightRow> rows;
  std::vector<double> latencies;
  std::vector<UnitQuat> calib_samples;
  ReferencePose ref;
  bool calibrated = false;
  double calib_t0 = 0.0;
  std::vector<double> prev_weights;
  double last_solved_rx = -1.0;
  Eigen::VectorXd b;

  const auto process = [&](const detail::OrientationSample& s) {
    if (!calibrated) {
      if (calib_samples.empty()) calib_t0 = s.rx_time;
      if (s.rx_time - calib_t0 < cfg.calibration_duration) {
        calib_samples.push_back(s.q);
        return;
      }
      ref = calibrate_reference(calib_samples);
      if (ref.spread > kMaxCalibrationSpread)
        throw CalibrationFailed("calibration spread " + std::to_string(rad2deg(ref.spread)) +
                                " deg exceeds 10 deg");
      calibrated = true;
      // fall through: this sample is the first one solved
    }
    if (cfg.max_rate_hz > 0.0 && last_solved_rx >= 0.0 &&
        s.rx_time - last_solved_rx < 1.0 / cfg.max_rate_hz) {
      ++metrics.frames_dropped;
      return;
    }
    const Mat3 rel = relative_rotation(s.q, ref);
    const Mat3 target = map_to_jaw_target(rel, cfg.mapping);
    target_rhs(sys, target, b);
    FrameSolution sol = solve(sys, b, cfg.solve);
    if (cfg.smoothing > 0.0 && !prev_weights.empty())
      for (std::size_t i = 0; i < sol.weights.size(); ++i)
        sol.weights[i] = cfg.smoothing * prev_weights[i] + (1.0 - cfg.smoothing) * sol.weights[i];
    prev_weights = sol.weights;
    last_solved_rx = s.rx_time;
    ++metrics.frames_solved;
    latencies.push_back(std::chrono::duration<double>(clock::now() - s.decoded_at).count());
    rows.push_back({s.rx_time, std::move(sol.weights), sol.residual_energy});
  };

  const bool synthetic_clock = spec.kind == SourceSpec::Kind::File;
  const auto should_stop = [stop] { return stop != nullptr && stop->load(); };

  if (cfg.replay_lockstep) {
    detail::TelemetryFeed feed;
    feed.use_raw = cfg.use_raw_imu;
    feed.filter = cfg.filter;
    msp::StreamDecoder decoder;
    std::vector<std::uint8_t> buf(4096);
    std::uint64_t sample_index = 0;
    while (!should_stop()) {
      const std::size_t n = src->read(buf.data(), buf.size());
      if (n == 0) {
        if (src->eof()) break;
        continue;
      }
      const auto decoded_at = clock::now();
      for (const msp::Frame& f : decoder.consume({buf.data(), n})) {
        if (f.command != feed.active_command()) continue;
        const double rx = static_cast<double>(sample_index++) / cfg.replay_rate_hz;
        ++metrics.frames_in;
        if (const auto s = feed.push(f, rx, decoded_at)) process(*s);
      }
    }
    metrics.bad_checksums = decoder.frames_bad_checksum();
  } else {
    detail::LatestMailbox box;
    std::atomic<bool> abort{false};
    std::atomic<std::uint64_t> frames_in{0};
    std::atomic<std::uint64_t> bad_checksums{0};
    // The decoder, the telemetry feed and the byte source are owned by the
    // ingest thread; the solve loop sees only mailbox samples and atomics.
    std::thread ingest([&] {
      detail::TelemetryFeed feed;
      feed.use_raw = cfg.use_raw_imu;
      feed.filter = cfg.filter;
      msp::StreamDecoder decoder;
      std::vector<std::uint8_t> buf(4096);
      std::uint64_t sample_index = 0;
      while (!abort.load() && !should_stop()) {
        const std::size_t n = src->read(buf.data(), buf.size());
        if (n == 0) {
          if (src->eof()) break;
          continue;
        }
        const auto decoded_at = clock::now();
        for (const msp::Frame& f : decoder.consume({buf.data(), n})) {
          if (f.command != feed.active_command()) continue;
          const double rx =
              synthetic_clock
                  ? static_cast<double>(sample_index) / cfg.replay_rate_hz
                  : std::chrono::duration<double>(decoded_at - wall_start).count();
          ++sample_index;
          frames_in.fetch_add(1);
          try {
            if (const auto s = feed.push(f, rx, decoded_at)) box.put(*s);
          } catch (const Error&) {
            // malformed-but-checksum-valid payload; skip the sample
          }
        }
      }
      bad_checksums.store(decoder.frames_bad_checksum());
      box.close();
    });

    try {
      bool done = false;
      while (!done) {
        const auto s = box.take(std::chrono::milliseconds(50));
        if (s.has_value()) {
          process(*s);
        } else if (box.closed_and_drained()) {
          done = true;
        }
        if (should_stop()) done = true;
      }
    } catch (...) {
      abort.store(true);
      box.close();
      ingest.join();
      throw;
    }
    abort.store(true);
    ingest.join();
    metrics.frames_in = frames_in.load();
    metrics.frames_dropped += box.dropped();
    metrics.bad_checksums = bad_checksums.load();
  }

  if (!calibrated)
    throw CalibrationFailed("source ended before the calibration window completed");

  std::sort(latencies.begin(), latencies.end());
  metrics.latency_p50 = percentile(latencies, 0.50);
  metrics.latency_p95 = percentile(latencies, 0.95);
  metrics.latency_p99 = percentile(latencies, 0.99);

  if (!cfg.weights_csv.empty()) write_weights_csv(cfg.weights_csv, bundle.rig.names, rows);
  if (!cfg.frames_dir.empty())
    export_frames(bundle.rig, rows, cfg.frames_dir, cfg.frame_stride);

  metrics.wall_time = std::chrono::duration<double>(clock::now() - wall_start).count();
  return metrics;
}

/// Reads just enough of the source to compute a reference pose over one
/// calibration window; backs the `calibrate` subcommand. If the source ends
/// early the pose is computed from whatever arrived. Throws
/// CalibrationFailed when no samples arrive at all.
inline ReferencePose calibrate_once(const PipelineConfig& cfg,
                                    const std::atomic<bool>* stop = nullptr) {
  using clock = std::chrono::steady_clock;
  const SourceSpec spec = parse_source_spec(cfg.source);
  auto src = open_source(spec);
  const auto start = clock::now();
  const bool synthetic_clock = spec.kind == SourceSpec::Kind::File;

  detail::TelemetryFeed feed;
  feed.use_raw = cfg.use_raw_imu;
  feed.filter = cfg.filter;
  msp::StreamDecoder decoder;

  std::vector<UnitQuat> samples;
  double t0 = 0.0;
  bool have_t0 = false;
  std::vector<std::uint8_t> buf(4096);
  std::uint64_t sample_index = 0;
  bool window_done = false;
  while (!window_done && !(stop != nullptr && stop->load())) {
    const std::size_t n = src->read(buf.data(), buf.size());
    if (n == 0) {
      if (src->eof()) break;
      continue;
    }
    const auto decoded_at = clock::now();
    for (const msp::Frame& f : decoder.consume({buf.data(), n})) {
      if (f.command != feed.active_command()) continue;
      const double rx = synthetic_clock
                            ? static_cast<double>(sample_index) / cfg.replay_rate_hz
                            : std::chrono::duration<double>(decoded_at - start).count();
      ++sample_index;
      const auto s = feed.push(f, rx, decoded_at);
      if (!s.has_value()) continue;
      if (!have_t0) {
        t0 = s->rx_time;
        have_t0 = true;
      }
      if (s->rx_time - t0 >= cfg.calibration_duration) {
        window_done = true;
        break;
      }
      samples.push_back(s->q);
    }
  }
  if (samples.empty()) throw CalibrationFailed("no telemetry samples arrived");
  return calibrate_reference(samples);
}

// ---------------------------------------------------------------------------
// Solver micro-benchmark backing the `bench` subcommand

struct BenchConfig {
  std::size_t shapes = 30;
  std::size_t masked_triangles = 500;
  std::size_t frames = 10000;
  std::uint64_t seed = 20260809;
};

struct BenchResult {
  std::size_t shapes = 0;
  std::size_t masked_triangles = 0;
  std::size_t frames = 0;
  double build_seconds = 0.0;
  double median_s = 0.0;
  double p95_s = 0.0;
  double p99_s = 0.0;
  double max_s = 0.0;
};

/// Times target_rhs + solve per frame on a synthetic rig while the target
/// rotation sweeps; the system build is excluded (it happens once).
inline BenchResult run_bench(const BenchConfig& c) {
  using clock = std::chrono::steady_clock;
  const RigBundle bundle = make_synthetic_rig(c.shapes, c.masked_triangles, c.seed);
  const SolveConfig scfg;

  const auto build_start = clock::now();
  const DtSystem sys = build_system(bundle.rig, bundle.mask, scfg);
  BenchResult r;
  r.build_seconds = std::chrono::duration<double>(clock::now() - build_start).count();
  r.shapes = c.shapes;
  r.masked_triangles = c.masked_triangles;
  r.frames = c.frames;

  Eigen::VectorXd b;
  std::vector<double> times;
  times.reserve(c.frames);
  double sink = 0.0;
  for (std::size_t i = 0; i < c.frames; ++i) {
    const Mat3 target = quat_to_mat3(quat_from_axis_angle(
        {0.0, 0.0, 1.0}, 0.35 * std::sin(0.001 * static_cast<double>(i))));
    const auto start = clock::now();
    target_rhs(sys, target, b);
    const FrameSolution sol = solve(sys, b, scfg);
    times.push_back(std::chrono::duration<double>(clock::now() - start).count());
    sink += sol.weights[0];
  }
  if (!std::isfinite(sink)) throw Error("benchmark produced non-finite weights");

  std::sort(times.begin(), times.end());
  r.median_s = percentile(times, 0.50);
  r.p95_s = percentile(times, 0.95);
  r.p99_s = percentile(times, 0.99);
  r.max_s = times.back();
  return r;
}

inline void print_bench_table(std::FILE* out, const BenchResult& r) {
  std::fprintf(out, "solver micro-benchmark (target_rhs + solve per frame)\n");
  std::fprintf(out, "  shapes          %zu\n", r.shapes);
  std::fprintf(out, "  masked tris     %zu\n", r.masked_triangles);
  std::fprintf(out, "  frames          %zu\n", r.frames);
  std::fprintf(out, "  system build    %.3f ms\n", r.build_seconds * 1e3);
  std::fprintf(out, "  median          %.4f ms\n", r.median_s * 1e3);
  std::fprintf(out, "  p95             %.4f ms\n", r.p95_s * 1e3);
  std::fprintf(out, "  p99             %.4f ms\n", r.p99_s * 1e3);
  std::fprintf(out, "  max             %.4f ms\n", r.max_s * 1e3);
}

}  // namespace imujaw::pipeline
