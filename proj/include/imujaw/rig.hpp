/*
 * Copyright (C) 2026 The imujaw authors
 *
 * SPDX-License-Identifier: Apache-2.0
 * See the file LICENSE for more information.
 */

#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "imujaw/geometry.hpp"

// The blendshape face model: neutral triangle mesh, per-shape vertex
// displacement fields, the jaw-region triangle mask, and the mesh I/O that
// feeds them. Shapes are stored on disk as absolute target meshes (what
// artists export); deltas are computed against the neutral at load time.

namespace imujaw {

struct FileNotFound : Error {
  using Error::Error;
};
struct TopologyMismatch : Error {
  using Error::Error;
};
struct BadRegionIndex : Error {
  using Error::Error;
};
struct DegenerateNeutralTriangle : Error {
  using Error::Error;
};
struct WeightLengthMismatch : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Types

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise indices

  std::array<Vec3, 3> triangle(int t) const {
    const auto& tri = triangles[static_cast<std::size_t>(t)];
    return {vertices[static_cast<std::size_t>(tri[0])],
            vertices[static_cast<std::size_t>(tri[1])],
            vertices[static_cast<std::size_t>(tri[2])]};
  }
};

struct BlendshapeRig {
  TriMesh neutral;
  std::vector<std::string> names;             // K labels
  std::vector<std::vector<Vec3>> deltas;      // K arrays, each |vertices| long

  std::size_t shape_count() const { return deltas.size(); }
};

/// Sorted unique triangle ids of the jaw region.
struct RegionMask {
  std::vector<int> triangle_indices;
};

struct RigBundle {
  BlendshapeRig rig;
  RegionMask mask;
};

// ---------------------------------------------------------------------------
// Validation

/// Enforces the mesh invariants: indices in range, no repeated corner,
/// every triangle non-degenerate, all coordinates finite.
inline void validate_mesh(const TriMesh& mesh) {
  const int vcount = static_cast<int>(mesh.vertices.size());
  for (const Vec3& v : mesh.vertices)
    if (!v.is_finite()) throw ParseError("mesh vertex is not finite");
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int c : tri)
      if (c < 0 || c >= vcount)
        throw ParseError("triangle " + std::to_string(t) + " references vertex " +
                         std::to_string(c) + " outside the mesh");
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw ParseError("triangle " + std::to_string(t) + " repeats a vertex");
    const auto corners = mesh.triangle(static_cast<int>(t));
    if (norm(cross(corners[1] - corners[0], corners[2] - corners[0])) <= kDegenerateCrossNorm)
      throw DegenerateNeutralTriangle("triangle " + std::to_string(t) + " is degenerate");
  }
}

// ---------------------------------------------------------------------------
// Wavefront OBJ I/O (vertices and faces only; normals, texture coordinates
// and grouping statements are ignored on read)

inline TriMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound("cannot open mesh file: " + path.string());
  TriMesh mesh;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v.x >> v.y >> v.z))
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> tri{};
      std::string corner;
      int read = 0;
      while (ss >> corner) {
        if (read >= 3)
          throw ParseError(path.string() + ":" + std::to_string(lineno) +
                           ": only triangular faces are supported");
        // "i", "i/t", "i/t/n", "i//n" -- the vertex index is up to the first '/'
        const std::size_t slash = corner.find('/');
        const std::string idx = slash == std::string::npos ? corner : corner.substr(0, slash);
        int value = 0;
        try {
          value = std::stoi(idx);
        } catch (const std::exception&) {
          throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed face index");
        }
        if (value <= 0)
          throw ParseError(path.string() + ":" + std::to_string(lineno) +
                           ": face indices must be positive (1-based)");
        tri[read++] = value - 1;
      }
      if (read != 3)
        throw ParseError(path.string() + ":" + std::to_string(lineno) +
                         ": face needs exactly 3 vertices");
      mesh.triangles.push_back(tri);
    }
    // anything else (vn, vt, o, g, s, #, mtllib, usemtl, ...) is skipped
  }
  return mesh;
}

inline void export_obj(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    out << buf;
  }
  for (const auto& tri : mesh.triangles)
    out << "f " << tri[0] + 1 << ' ' << tri[1] + 1 << ' ' << tri[2] + 1 << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Region and manifest files

/// One triangle index per line; '#' comments and blank lines allowed.
/// Indices are sorted and deduplicated on load.
inline RegionMask load_region(const std::filesystem::path& path, std::size_t triangle_count) {
  std::ifstream in(path);
  if (!in) throw FileNotFound("cannot open region file: " + path.string());
  std::set<int> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    int id = 0;
    if (!(ss >> id)) continue;
    if (id < 0 || static_cast<std::size_t>(id) >= triangle_count)
      throw BadRegionIndex(path.string() + ":" + std::to_string(lineno) + ": triangle id " +
                           std::to_string(id) + " out of range");
    ids.insert(id);
  }
  if (ids.empty()) throw BadRegionIndex("region file lists no triangles: " + path.string());
  RegionMask mask;
  mask.triangle_indices.assign(ids.begin(), ids.end());
  return mask;
}

/// Loads a rig manifest: JSON object naming the neutral mesh, the region
/// file and one absolute target mesh per shape. Relative paths resolve
/// against the manifest's directory. All meshes must share the neutral's
/// triangle list; shape deltas are target minus neutral per vertex.
inline RigBundle load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw FileNotFound("cannot open rig manifest: " + manifest_path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("rig manifest is not valid JSON: " + std::string(e.what()));
  }

  const auto base = manifest_path.parent_path();
  const auto resolve = [&base](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };

  if (!doc.contains("neutral") || !doc.contains("region") || !doc.contains("shapes"))
    throw ParseError("rig manifest needs 'neutral', 'region' and 'shapes' entries");

  RigBundle bundle;
  bundle.rig.neutral = load_obj(resolve(doc["neutral"].get<std::string>()));
  validate_mesh(bundle.rig.neutral);

  const auto& shapes = doc["shapes"];
  if (!shapes.is_array() || shapes.empty())
    throw ParseError("rig manifest needs at least one shape");
  int index = 0;
  for (const auto& entry : shapes) {
    if (!entry.contains("mesh")) throw ParseError("shape entry missing 'mesh'");
    const std::string name =
        entry.contains("name") ? entry["name"].get<std::string>() : "shape_" + std::to_string(index);
    const TriMesh target = load_obj(resolve(entry["mesh"].get<std::string>()));
    if (target.triangles != bundle.rig.neutral.triangles ||
        target.vertices.size() != bundle.rig.neutral.vertices.size())
      throw TopologyMismatch("shape '" + name + "' does not share the neutral topology");
    std::vector<Vec3> delta(target.vertices.size());
    for (std::size_t i = 0; i < target.vertices.size(); ++i) {
      delta[i] = target.vertices[i] - bundle.rig.neutral.vertices[i];
      if (!delta[i].is_finite()) throw ParseError("shape '" + name + "' has non-finite vertices");
    }
    bundle.rig.names.push_back(name);
    bundle.rig.deltas.push_back(std::move(delta));
    ++index;
  }

  bundle.mask = load_region(resolve(doc["region"].get<std::string>()),
                            bundle.rig.neutral.triangles.size());
  return bundle;
}

// ---------------------------------------------------------------------------
// Deformation

/// Per-triangle deformation gradient F = frame(deformed) * frame(rest)^-1.
/// The rest triangle must be non-degenerate; a degenerate deformed triangle
/// is allowed and yields a rank-deficient F.
inline Mat3 deformation_gradient(const std::array<Vec3, 3>& rest,
                                 const std::array<Vec3, 3>& deformed) {
  const Mat3 v = triangle_frame(rest[0], rest[1], rest[2]);
  const Mat3 vt = detail::triangle_frame_unchecked(deformed[0], deformed[1], deformed[2]);
  return vt * v.inverse();
}

/// neutral + sum_k w_k * delta_k; triangles shared with the neutral.
inline TriMesh apply_weights(const BlendshapeRig& rig, std::span<const double> w) {
  if (w.size() != rig.shape_count())
    throw WeightLengthMismatch("got " + std::to_string(w.size()) + " weights for " +
                               std::to_string(rig.shape_count()) + " shapes");
  TriMesh out;
  out.triangles = rig.neutral.triangles;
  out.vertices = rig.neutral.vertices;
  for (std::size_t k = 0; k < rig.shape_count(); ++k) {
    const double wk = w[k];
    if (wk == 0.0) continue;
    const auto& delta = rig.deltas[k];
    for (std::size_t i = 0; i < out.vertices.size(); ++i) out.vertices[i] += delta[i] * wk;
  }
  return out;
}

}  // namespace imujaw
