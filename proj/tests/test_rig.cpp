/*
 * Copyright (C) 2026 The imujaw authors
 *
 * SPDX-License-Identifier: Apache-2.0
 * See the file LICENSE for more information.
 */

#include <filesystem>
#include <fstream>
#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "imujaw/procedural_rigs.hpp"
#include "imujaw/rig.hpp"
#include "test_helpers.hpp"

using namespace imujaw;
using testutil::mat_dist;
using testutil::random_quat;
using testutil::random_vec;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("imujaw_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TriMesh canonical_triangle() {
  TriMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.triangles = {{0, 1, 2}};
  return m;
}

}  // namespace

TEST_CASE("export_obj writes exactly the expected lines", "[rig]") {
  const auto dir = temp_dir("obj_lines");
  const auto path = dir / "tri.obj";
  export_obj(canonical_triangle(), path);

  std::ifstream in(path);
  std::string line;
  int v_lines = 0, f_lines = 0;
  std::string last;
  while (std::getline(in, line)) {
    if (line.rfind("v ", 0) == 0) ++v_lines;
    if (line.rfind("f ", 0) == 0) {
      ++f_lines;
      last = line;
    }
  }
  CHECK(v_lines == 3);
  CHECK(f_lines == 1);
  CHECK(last == "f 1 2 3");
}

TEST_CASE("obj export/import round-trips vertices", "[rig]") {
  std::mt19937_64 rng(31);
  TriMesh mesh;
  for (int i = 0; i < 30; ++i) mesh.vertices.push_back(random_vec(rng, 10.0));
  for (int i = 0; i + 2 < 30; i += 3) mesh.triangles.push_back({i, i + 1, i + 2});

  const auto dir = temp_dir("obj_roundtrip");
  const auto path = dir / "mesh.obj";
  export_obj(mesh, path);
  const TriMesh back = load_obj(path);
  REQUIRE(back.vertices.size() == mesh.vertices.size());
  REQUIRE(back.triangles == mesh.triangles);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    CHECK(norm(back.vertices[i] - mesh.vertices[i]) < 1e-9);
}

TEST_CASE("empty mesh exports to a valid empty file", "[rig]") {
  const auto dir = temp_dir("obj_empty");
  const auto path = dir / "empty.obj";
  export_obj(TriMesh{}, path);
  const TriMesh back = load_obj(path);
  CHECK(back.vertices.empty());
  CHECK(back.triangles.empty());
}

TEST_CASE("load_obj ignores normals and comments, takes face vertex index", "[rig]") {
  const auto dir = temp_dir("obj_extras");
  const auto path = dir / "extras.obj";
  {
    std::ofstream out(path);
    out << "# comment\n"
        << "o thing\n"
        << "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
        << "vn 0 0 1\n"
        << "vt 0.5 0.5\n"
        << "s off\n"
        << "f 1/1/1 2/1/1 3/1/1\n";
  }
  const TriMesh mesh = load_obj(path);
  CHECK(mesh.vertices.size() == 3);
  REQUIRE(mesh.triangles.size() == 1);
  CHECK(mesh.triangles[0] == std::array<int, 3>{0, 1, 2});
}

TEST_CASE("load_obj rejects quads and bad indices", "[rig]") {
  const auto dir = temp_dir("obj_bad");
  {
    std::ofstream out(dir / "quad.obj");
    out << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
  }
  CHECK_THROWS_AS(load_obj(dir / "quad.obj"), ParseError);
  {
    std::ofstream out(dir / "neg.obj");
    out << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n";
  }
  CHECK_THROWS_AS(load_obj(dir / "neg.obj"), ParseError);
  CHECK_THROWS_AS(load_obj(dir / "missing.obj"), FileNotFound);
}

TEST_CASE("manifest loading computes deltas against the neutral", "[rig]") {
  const auto dir = temp_dir("manifest");
  TriMesh neutral = canonical_triangle();
  export_obj(neutral, dir / "neutral.obj");

  // shape 0: identical to the neutral -> all-zero deltas
  export_obj(neutral, dir / "same.obj");

  // shape 1: vertex 0 displaced by (0, 0, 0.1)
  TriMesh moved = neutral;
  moved.vertices[0].z += 0.1;
  export_obj(moved, dir / "moved.obj");

  {
    std::ofstream region(dir / "region.txt");
    region << "0\n";
  }
  {
    std::ofstream manifest(dir / "rig.json");
    manifest << R"({"neutral": "neutral.obj", "region": "region.txt",
                    "shapes": [{"name": "same", "mesh": "same.obj"},
                               {"name": "moved", "mesh": "moved.obj"}]})";
  }

  const RigBundle bundle = load_manifest(dir / "rig.json");
  REQUIRE(bundle.rig.shape_count() == 2);
  CHECK(bundle.rig.names[0] == "same");
  for (const Vec3& d : bundle.rig.deltas[0]) CHECK(norm(d) == 0.0);
  CHECK(norm(bundle.rig.deltas[1][0] - Vec3{0, 0, 0.1}) < 1e-15);
  CHECK(norm(bundle.rig.deltas[1][1]) == 0.0);
  CHECK(norm(bundle.rig.deltas[1][2]) == 0.0);
  CHECK(bundle.mask.triangle_indices == std::vector<int>{0});
}

TEST_CASE("manifest loading rejects topology mismatches", "[rig]") {
  const auto dir = temp_dir("manifest_mismatch");
  export_obj(canonical_triangle(), dir / "neutral.obj");

  TriMesh extra = canonical_triangle();
  extra.vertices.push_back({0, 0, 1});
  extra.triangles.push_back({0, 1, 3});
  export_obj(extra, dir / "extra.obj");

  {
    std::ofstream region(dir / "region.txt");
    region << "0\n";
  }
  {
    std::ofstream manifest(dir / "rig.json");
    manifest << R"({"neutral": "neutral.obj", "region": "region.txt",
                    "shapes": [{"name": "extra", "mesh": "extra.obj"}]})";
  }
  CHECK_THROWS_AS(load_manifest(dir / "rig.json"), TopologyMismatch);
}

TEST_CASE("manifest loading rejects bad region indices and missing files", "[rig]") {
  const auto dir = temp_dir("manifest_region");
  export_obj(canonical_triangle(), dir / "neutral.obj");
  export_obj(canonical_triangle(), dir / "shape.obj");
  {
    std::ofstream region(dir / "region.txt");
    region << "7\n";  // only triangle 0 exists
  }
  {
    std::ofstream manifest(dir / "rig.json");
    manifest << R"({"neutral": "neutral.obj", "region": "region.txt",
                    "shapes": [{"mesh": "shape.obj"}]})";
  }
  CHECK_THROWS_AS(load_manifest(dir / "rig.json"), BadRegionIndex);
  CHECK_THROWS_AS(load_manifest(dir / "nope.json"), FileNotFound);
}

TEST_CASE("manifest loading rejects degenerate neutral triangles", "[rig]") {
  const auto dir = temp_dir("manifest_degenerate");
  TriMesh flat;
  flat.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  flat.triangles = {{0, 1, 2}};
  export_obj(flat, dir / "neutral.obj");
  export_obj(flat, dir / "shape.obj");
  {
    std::ofstream region(dir / "region.txt");
    region << "0\n";
  }
  {
    std::ofstream manifest(dir / "rig.json");
    manifest << R"({"neutral": "neutral.obj", "region": "region.txt",
                    "shapes": [{"mesh": "shape.obj"}]})";
  }
  CHECK_THROWS_AS(load_manifest(dir / "rig.json"), DegenerateNeutralTriangle);
}

TEST_CASE("apply_weights reference behavior", "[rig]") {
  const RigBundle bundle = make_wedge_rig();
  const std::size_t k = bundle.rig.shape_count();

  const std::vector<double> zero(k, 0.0);
  const TriMesh neutral = apply_weights(bundle.rig, zero);
  for (std::size_t i = 0; i < neutral.vertices.size(); ++i)
    CHECK(neutral.vertices[i] == bundle.rig.neutral.vertices[i]);

  std::vector<double> unit(k, 0.0);
  unit[0] = 1.0;
  const TriMesh shape0 = apply_weights(bundle.rig, unit);
  for (std::size_t i = 0; i < shape0.vertices.size(); ++i)
    CHECK(norm(shape0.vertices[i] - (bundle.rig.neutral.vertices[i] + bundle.rig.deltas[0][i])) ==
          0.0);

  CHECK_THROWS_AS(apply_weights(bundle.rig, std::vector<double>(k + 1, 0.0)),
                  WeightLengthMismatch);
}

TEST_CASE("apply_weights superposes linearly", "[rig]") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const RigBundle bundle = make_wedge_rig();
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> w1{u(rng), u(rng)};
    const std::vector<double> w2{u(rng), u(rng)};
    const std::vector<double> sum{w1[0] + w2[0], w1[1] + w2[1]};
    const TriMesh m1 = apply_weights(bundle.rig, w1);
    const TriMesh m2 = apply_weights(bundle.rig, w2);
    const TriMesh ms = apply_weights(bundle.rig, sum);
    for (std::size_t i = 0; i < ms.vertices.size(); ++i) {
      const Vec3 expected =
          m1.vertices[i] + m2.vertices[i] - bundle.rig.neutral.vertices[i];
      CHECK(norm(ms.vertices[i] - expected) < 1e-12);
    }
  }
}

TEST_CASE("apply_weights is affine in the weights", "[rig]") {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const RigBundle bundle = make_wedge_rig();
  const std::vector<double> w{u(rng), u(rng)};
  const double alpha = 0.37;
  const std::vector<double> scaled{alpha * w[0], alpha * w[1]};
  const TriMesh mw = apply_weights(bundle.rig, w);
  const TriMesh ma = apply_weights(bundle.rig, scaled);
  for (std::size_t i = 0; i < mw.vertices.size(); ++i) {
    const Vec3 expected = bundle.rig.neutral.vertices[i] +
                          (mw.vertices[i] - bundle.rig.neutral.vertices[i]) * alpha;
    CHECK(norm(ma.vertices[i] - expected) < 1e-12);
  }
}

TEST_CASE("deformation_gradient reference values", "[rig]") {
  const std::array<Vec3, 3> rest{Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}};
  CHECK(mat_dist(deformation_gradient(rest, rest), Mat3::identity()) < 1e-15);

  std::mt19937_64 rng(34);
  const Mat3 r = quat_to_mat3(random_quat(rng));
  const std::array<Vec3, 3> rotated{r * rest[0], r * rest[1], r * rest[2]};
  CHECK(mat_dist(deformation_gradient(rest, rotated), r) < 1e-9);

  const std::array<Vec3, 3> scaled{Vec3{0, 0, 0}, Vec3{2, 0, 0}, Vec3{0, 2, 0}};
  CHECK(mat_dist(deformation_gradient(rest, scaled), Mat3::identity() * 2.0) < 1e-12);
}

TEST_CASE("deformation_gradient tolerates a collapsed deformed triangle", "[rig]") {
  const std::array<Vec3, 3> rest{Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}};
  const std::array<Vec3, 3> collapsed{Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{2, 0, 0}};
  const Mat3 f = deformation_gradient(rest, collapsed);
  CHECK(f.is_finite());
  CHECK(std::fabs(f.det()) < 1e-12);  // rank-deficient
  // and the rest triangle must not be degenerate
  CHECK_THROWS_AS(deformation_gradient(collapsed, rest), DegenerateTriangle);
}

TEST_CASE("wedge rig satisfies the mesh invariants and exact affinity", "[rig]") {
  const RigBundle bundle = make_wedge_rig();
  CHECK_NOTHROW(validate_mesh(bundle.rig.neutral));
  CHECK(bundle.rig.shape_count() == 2);
  CHECK(bundle.mask.triangle_indices.size() == 4);

  // F(w) - F(0) is linear in w: finite differences at full activation
  // reproduce F at any interior weight.
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<double> w{u(rng), u(rng)};
    const TriMesh deformed = apply_weights(bundle.rig, w);
    for (int t : bundle.mask.triangle_indices) {
      const auto rest = bundle.rig.neutral.triangle(t);
      const Mat3 f = deformation_gradient(rest, deformed.triangle(t));
      Mat3 predicted = deformation_gradient(rest, rest);
      for (std::size_t k = 0; k < 2; ++k) {
        std::vector<double> unit(2, 0.0);
        unit[k] = 1.0;
        const TriMesh full = apply_weights(bundle.rig, unit);
        const Mat3 df = deformation_gradient(rest, full.triangle(t)) -
                        deformation_gradient(rest, rest);
        predicted = predicted + df * w[k];
      }
      CHECK(mat_dist(f, predicted) < 1e-8);
    }
  }
}

TEST_CASE("wedge rig round-trips through the manifest files", "[rig]") {
  const auto dir = temp_dir("wedge_files");
  const RigBundle bundle = make_wedge_rig();
  const auto manifest = write_rig_files(bundle, dir);
  const RigBundle back = load_manifest(manifest);
  CHECK(back.rig.names == bundle.rig.names);
  CHECK(back.rig.neutral.triangles == bundle.rig.neutral.triangles);
  CHECK(back.mask.triangle_indices == bundle.mask.triangle_indices);
  for (std::size_t k = 0; k < bundle.rig.shape_count(); ++k)
    for (std::size_t i = 0; i < bundle.rig.deltas[k].size(); ++i)
      CHECK(norm(back.rig.deltas[k][i] - bundle.rig.deltas[k][i]) < 1e-12);
}
