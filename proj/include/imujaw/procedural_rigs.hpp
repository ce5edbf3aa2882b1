/*
 * Copyright (C) 2026 The imujaw authors
 *
 * SPDX-License-Identifier: Apache-2.0
 * See the file LICENSE for more information.
 */

#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <json.hpp>

#include "imujaw/rig.hpp"

// Procedurally generated rigs, so every test and demo is hermetic.
//
// Both generators use the same "hinge bar with flaps" construction: a row
// of fixed vertices along the x axis, one private tip vertex per flap
// triangle, and blendshape displacements that move each tip parallel to its
// flap's hinge edge. Moving a tip parallel to the opposite edge leaves the
// triangle's edge cross product (and therefore the frame's normal column)
// unchanged for every weight combination, which makes the per-triangle
// deformation gradient an exactly affine function of the weights. The
// solver's linear model is then exact on these rigs, so tests can assert
// model-vs-mesh agreement at tight tolerances instead of linearization
// noise.

namespace imujaw {

/// Tiny wedge "jaw": a hinge bar along x, four masked jaw flaps hanging
/// below it, four unmasked skull flaps above. Two shapes, jaw_open and
/// jaw_slide, shear the jaw tips along the hinge with different per-flap
/// amounts, giving a well-conditioned rank-2 system. A positive rotation of
/// the target about +z excites jaw_open with a positive, monotone weight.
inline RigBundle make_wedge_rig() {
  RigBundle bundle;
  TriMesh& mesh = bundle.rig.neutral;

  for (int i = 0; i <= 4; ++i) mesh.vertices.push_back({0.25 * i, 0.0, 0.0});  // hinge 0..4
  for (int j = 0; j < 4; ++j)
    mesh.vertices.push_back({0.25 * j + 0.125, -0.45, -0.30});  // jaw tips 5..8
  for (int j = 0; j < 4; ++j)
    mesh.vertices.push_back({0.25 * j + 0.125, -0.10, 0.50});  // skull tips 9..12

  for (int j = 0; j < 4; ++j) mesh.triangles.push_back({j, j + 1, 5 + j});  // jaw flaps 0..3
  for (int j = 0; j < 4; ++j) mesh.triangles.push_back({j + 1, j, 9 + j});  // skull flaps 4..7

  bundle.mask.triangle_indices = {0, 1, 2, 3};

  const double open_amount[4] = {0.32, 0.24, 0.18, 0.10};
  const double slide_amount[4] = {-0.12, 0.10, -0.16, 0.20};
  std::vector<Vec3> open_delta(mesh.vertices.size());
  std::vector<Vec3> slide_delta(mesh.vertices.size());
  for (int j = 0; j < 4; ++j) {
    open_delta[static_cast<std::size_t>(5 + j)] = {open_amount[j], 0.0, 0.0};
    slide_delta[static_cast<std::size_t>(5 + j)] = {slide_amount[j], 0.0, 0.0};
  }
  bundle.rig.names = {"jaw_open", "jaw_slide"};
  bundle.rig.deltas = {std::move(open_delta), std::move(slide_delta)};
  return bundle;
}

/// Larger strip of the same construction for benchmarks: `masked_triangles`
/// flaps, all masked, with `shape_count` shapes of seeded random per-flap
/// shear amounts.
inline RigBundle make_synthetic_rig(std::size_t shape_count, std::size_t masked_triangles,
                                    std::uint64_t seed) {
  RigBundle bundle;
  TriMesh& mesh = bundle.rig.neutral;
  const auto flaps = static_cast<int>(masked_triangles);

  for (int i = 0; i <= flaps; ++i) mesh.vertices.push_back({0.1 * i, 0.0, 0.0});
  for (int j = 0; j < flaps; ++j) mesh.vertices.push_back({0.1 * j + 0.05, -0.35, -0.25});
  for (int j = 0; j < flaps; ++j) {
    mesh.triangles.push_back({j, j + 1, flaps + 1 + j});
    bundle.mask.triangle_indices.push_back(j);
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> amount(0.0, 0.05);
  for (std::size_t k = 0; k < shape_count; ++k) {
    std::vector<Vec3> delta(mesh.vertices.size());
    for (int j = 0; j < flaps; ++j)
      delta[static_cast<std::size_t>(flaps + 1 + j)] = {amount(rng), 0.0, 0.0};
    bundle.rig.names.push_back("synth_" + std::to_string(k));
    bundle.rig.deltas.push_back(std::move(delta));
  }
  return bundle;
}

/// Writes a bundle to disk in the manifest layout `load_manifest` reads:
/// neutral.obj, one <name>.obj per shape (absolute target meshes), the
/// region file and rig.json. Returns the manifest path.
inline std::filesystem::path write_rig_files(const RigBundle& bundle,
                                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  export_obj(bundle.rig.neutral, dir / "neutral.obj");

  nlohmann::json manifest;
  manifest["neutral"] = "neutral.obj";
  manifest["region"] = "jaw.region";
  manifest["shapes"] = nlohmann::json::array();
  std::vector<double> w(bundle.rig.shape_count(), 0.0);
  for (std::size_t k = 0; k < bundle.rig.shape_count(); ++k) {
    w.assign(bundle.rig.shape_count(), 0.0);
    w[k] = 1.0;
    const std::string file = bundle.rig.names[k] + ".obj";
    export_obj(apply_weights(bundle.rig, w), dir / file);
    manifest["shapes"].push_back({{"name", bundle.rig.names[k]}, {"mesh", file}});
  }

  {
    std::ofstream region(dir / "jaw.region");
    if (!region) throw IoError("cannot write region file");
    region << "# jaw region triangle ids\n";
    for (int t : bundle.mask.triangle_indices) region << t << '\n';
  }

  const auto manifest_path = dir / "rig.json";
  std::ofstream out(manifest_path);
  if (!out) throw IoError("cannot write rig manifest");
  out << manifest.dump(2) << '\n';
  return manifest_path;
}

}  // namespace imujaw
