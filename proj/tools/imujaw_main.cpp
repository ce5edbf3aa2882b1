/*
 * Copyright (C) 2026 The imujaw authors
 *
 * SPDX-License-Identifier: Apache-2.0
 * See the file LICENSE for more information.
 */

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "imujaw/pipeline.hpp"
#include "imujaw/procedural_rigs.hpp"
#include "imujaw/simulator.hpp"

// imujaw command line: turn hand-gesture IMU telemetry into jaw blendshape
// weights.
//
//   simulate    render a gesture script into an MSP capture file
//   calibrate   read one calibration window and print the reference pose
//   run         full pipeline: calibrate, stream, solve, write outputs
//   bench       solver micro-benchmark (real-time metrics table)
//   export-rig  write the built-in wedge demo rig as OBJ + manifest files
//
// Exit codes: 0 ok, 2 config error, 3 source error, 4 calibration failed.

namespace {

std::atomic<bool> g_stop{false};

void handle_interrupt(int) {
  if (g_stop.exchange(true)) std::_Exit(130);  // second signal: immediate exit
}

void install_signal_handlers() {
  struct sigaction sa{};
  sa.sa_handler = handle_interrupt;
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
}

struct RunFlags {
  std::string config_path;
  std::optional<std::string> source;
  std::optional<std::string> rig;
  std::optional<std::string> out_weights;
  std::optional<std::string> out_frames;
  std::optional<int> frame_stride;
  std::optional<double> lambda;
  bool no_clamp = false;
  std::optional<double> max_angle_deg;
  std::optional<double> smooth;
  bool replay_lockstep = false;
  std::optional<double> replay_rate;
  std::optional<double> calibration_duration;
  std::optional<double> max_rate;
  bool raw_imu = false;
  bool print_config = false;
};

imujaw::pipeline::PipelineConfig merge_config(const RunFlags& f) {
  imujaw::pipeline::PipelineConfig cfg;
  if (!f.config_path.empty()) cfg = imujaw::pipeline::load_config(f.config_path);
  if (f.source) cfg.source = *f.source;
  if (f.rig) cfg.rig_manifest = *f.rig;
  if (f.out_weights) cfg.weights_csv = *f.out_weights;
  if (f.out_frames) cfg.frames_dir = *f.out_frames;
  if (f.frame_stride) cfg.frame_stride = *f.frame_stride;
  if (f.lambda) cfg.solve.lambda = *f.lambda;
  if (f.no_clamp) cfg.solve.clamp = false;
  if (f.max_angle_deg) cfg.mapping.max_angle = imujaw::deg2rad(*f.max_angle_deg);
  if (f.smooth) cfg.smoothing = *f.smooth;
  if (f.replay_lockstep) cfg.replay_lockstep = true;
  if (f.replay_rate) cfg.replay_rate_hz = *f.replay_rate;
  if (f.calibration_duration) cfg.calibration_duration = *f.calibration_duration;
  if (f.max_rate) cfg.max_rate_hz = *f.max_rate;
  if (f.raw_imu) cfg.use_raw_imu = true;
  return cfg;
}

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file; flags override its values");
  cmd->add_option("--source", f.source,
                  "telemetry source: file:<path> | tcp:<host>:<port> | serial:<dev>:<baud>");
  cmd->add_option("--rig", f.rig, "rig manifest path");
  cmd->add_option("--out-weights", f.out_weights, "weights CSV output path");
  cmd->add_option("--out-frames", f.out_frames, "OBJ frame sequence directory");
  cmd->add_option("--frame-stride", f.frame_stride, "export every Nth frame (default 1)");
  cmd->add_option("--lambda", f.lambda, "Tikhonov weight, relative to trace(AtA)/K");
  cmd->add_flag("--no-clamp", f.no_clamp, "do not clamp weights to [0,1]");
  cmd->add_option("--max-angle-deg", f.max_angle_deg, "jaw rotation clamp in degrees");
  cmd->add_option("--smooth", f.smooth, "exponential weight smoothing in [0,1)");
  cmd->add_flag("--replay-lockstep", f.replay_lockstep,
                "file sources: solve every sample, no drops (deterministic)");
  cmd->add_option("--replay-rate", f.replay_rate, "assumed sample rate of capture files, Hz");
  cmd->add_option("--calibration-duration", f.calibration_duration,
                  "calibration window in seconds (default 2)");
  cmd->add_option("--max-rate", f.max_rate, "cap on solved frames per second");
  cmd->add_flag("--raw-imu", f.raw_imu, "consume RAW_IMU through the complementary filter");
  cmd->add_flag("--print-config", f.print_config, "print the merged config as JSON and exit");
}

int exit_code_for(const imujaw::Error& e) {
  using namespace imujaw;
  if (dynamic_cast<const pipeline::CalibrationFailed*>(&e) != nullptr) return 4;
  if (dynamic_cast<const pipeline::SourceUnavailable*>(&e) != nullptr) return 3;
  if (dynamic_cast<const pipeline::ConfigError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const pipeline::RigLoadError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const ParseError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const FileNotFound*>(&e) != nullptr) return 2;
  return 1;
}

int cmd_simulate(const std::string& script_path, double rate, double duration, double noise_deg,
                 std::uint64_t seed, const std::string& out_path) {
  const imujaw::sim::GestureScript script = imujaw::sim::load_script(script_path);
  imujaw::sim::NoiseConfig noise;
  noise.attitude_noise_deg = noise_deg;
  noise.seed = seed;
  const auto stream = imujaw::sim::generate_stream(script, rate, duration, noise);
  imujaw::sim::write_capture(out_path, stream);
  std::printf("wrote %zu bytes (%zu frames) to %s\n", stream.size(), stream.size() / 12,
              out_path.c_str());
  return 0;
}

int cmd_calibrate(const RunFlags& flags) {
  const auto cfg = merge_config(flags);
  if (flags.print_config) {
    std::printf("%s\n", imujaw::pipeline::config_to_json(cfg).dump(2).c_str());
    return 0;
  }
  if (cfg.source.empty()) throw imujaw::pipeline::ConfigError("calibrate needs a --source");
  const imujaw::ReferencePose ref = imujaw::pipeline::calibrate_once(cfg, &g_stop);
  std::printf("reference pose (w x y z): %.9f %.9f %.9f %.9f\n", ref.q_ref.w, ref.q_ref.x,
              ref.q_ref.y, ref.q_ref.z);
  std::printf("spread: %.4f deg over %d samples\n", imujaw::rad2deg(ref.spread),
              ref.sample_count);
  if (ref.spread > imujaw::pipeline::kMaxCalibrationSpread) {
    std::fprintf(stderr, "calibration spread exceeds 10 deg; hold the sensor still\n");
    return 4;
  }
  return 0;
}

int cmd_run(const RunFlags& flags) {
  const auto cfg = merge_config(flags);
  if (flags.print_config) {
    std::printf("%s\n", imujaw::pipeline::config_to_json(cfg).dump(2).c_str());
    return 0;
  }
  const imujaw::pipeline::RunMetrics m = imujaw::pipeline::run(cfg, &g_stop);
  std::printf("frames in        %llu\n", static_cast<unsigned long long>(m.frames_in));
  std::printf("frames solved    %llu\n", static_cast<unsigned long long>(m.frames_solved));
  std::printf("frames dropped   %llu\n", static_cast<unsigned long long>(m.frames_dropped));
  std::printf("bad checksums    %llu\n", static_cast<unsigned long long>(m.bad_checksums));
  std::printf("latency p50/p95/p99  %.4f / %.4f / %.4f ms\n", m.latency_p50 * 1e3,
              m.latency_p95 * 1e3, m.latency_p99 * 1e3);
  std::printf("wall time        %.3f s\n", m.wall_time);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  install_signal_handlers();

  CLI::App app{"gesture-driven jaw blendshape solver over MSP telemetry"};
  app.require_subcommand(1);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "render a gesture script into a capture file");
  std::string sim_script, sim_out;
  double sim_rate = 100.0, sim_duration = 0.0, sim_noise = 0.0;
  std::uint64_t sim_seed = 0;
  sim_cmd->add_option("--script", sim_script, "gesture script JSON")->required();
  sim_cmd->add_option("--rate", sim_rate, "sample rate in Hz (default 100)");
  sim_cmd->add_option("--duration", sim_duration, "capture length in seconds")->required();
  sim_cmd->add_option("--noise-deg", sim_noise, "attitude noise std-dev in degrees");
  sim_cmd->add_option("--seed", sim_seed, "noise RNG seed");
  sim_cmd->add_option("--out", sim_out, "capture output path")->required();

  // calibrate
  auto* cal_cmd = app.add_subcommand("calibrate", "print the reference pose over one window");
  RunFlags cal_flags;
  add_run_flags(cal_cmd, cal_flags);

  // run
  auto* run_cmd = app.add_subcommand("run", "full pipeline: calibrate, stream, solve, output");
  RunFlags run_flags;
  add_run_flags(run_cmd, run_flags);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "solver micro-benchmark");
  imujaw::pipeline::BenchConfig bench_cfg;
  bench_cmd->add_option("--shapes", bench_cfg.shapes, "number of blendshapes (default 30)");
  bench_cmd->add_option("--triangles", bench_cfg.masked_triangles,
                        "masked triangle count (default 500)");
  bench_cmd->add_option("--frames", bench_cfg.frames, "frames to time (default 10000)");
  bench_cmd->add_option("--seed", bench_cfg.seed, "synthetic rig seed");

  // export-rig
  auto* rig_cmd = app.add_subcommand("export-rig", "write the wedge demo rig to a directory");
  std::string rig_dir = "demo-rig";
  rig_cmd->add_option("--dir", rig_dir, "output directory (default demo-rig)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim_cmd->parsed())
      return cmd_simulate(sim_script, sim_rate, sim_duration, sim_noise, sim_seed, sim_out);
    if (cal_cmd->parsed()) return cmd_calibrate(cal_flags);
    if (run_cmd->parsed()) return cmd_run(run_flags);
    if (bench_cmd->parsed()) {
      const auto result = imujaw::pipeline::run_bench(bench_cfg);
      imujaw::pipeline::print_bench_table(stdout, result);
      return 0;
    }
    if (rig_cmd->parsed()) {
      const auto manifest = imujaw::write_rig_files(imujaw::make_wedge_rig(), rig_dir);
      std::printf("wrote wedge rig manifest to %s\n", manifest.string().c_str());
      return 0;
    }
  } catch (const imujaw::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
