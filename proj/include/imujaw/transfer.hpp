/*
 * Copyright (C) 2026 The imujaw authors
 *
 * SPDX-License-Identifier: Apache-2.0
 * See the file LICENSE for more information.
 */

#pragma once

#include <chrono>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "imujaw/rig.hpp"

// Per-frame weight solve. The energy being minimized is the sum over the
// masked (jaw) triangles of the squared Frobenius distance between each
// triangle's deformation gradient and a prescribed target gradient, plus a
// Tikhonov term:
//
//     E(w) = sum_{j in mask} |F_j(w) - T|_F^2  +  lambda |w|^2
//
// Because blendshape displacement is linear in w, F_j(w) is modeled as the
// affine map F_j(0) + sum_k w_k (D_jk V_j^-1), where column k of the
// Jacobian A stacks the gradient change of fully activating shape k. The
// whole system except the right-hand side is frame-invariant, so A and the
// factorization of (A^T A + lambda I) are precomputed once and every frame
// costs one matrix-vector product plus a back-substitution.

namespace imujaw {

struct SingularSystem : Error {
  using Error::Error;
};
struct DimensionMismatch : Error {
  using Error::Error;
};

/// lambda is relative: the factorized system uses
/// lambda_abs = lambda * trace(A^T A) / K, which makes the regularization
/// invariant to mesh scale. (When A is identically zero, lambda is used
/// as-is so the system stays solvable.)
struct SolveConfig {
  double lambda = 1e-6;
  bool clamp = true;  // clamp weights to [0, 1] after the solve
};

struct FrameSolution {
  std::vector<double> weights;
  double residual_energy = 0.0;  // sum_j |F_j(w) - T|_F^2 at the returned w
  double solve_time = 0.0;       // seconds
};

/// Precomputed least-squares system over the masked triangles.
/// Immutable after build_system; safe to share between threads, each doing
/// its own target_rhs/solve with private buffers.
struct DtSystem {
  std::vector<int> mask;                 // triangle ids, mask order
  std::vector<Mat3> rest_inverse;        // V_j^-1 per masked triangle
  std::vector<Mat3> rest_gradient;       // F_j(0) per masked triangle
  Eigen::MatrixXd jacobian;              // 9|J| x K, column k = vec(D_jk V_j^-1) stacked
  Eigen::LLT<Eigen::MatrixXd> normal_factor;  // of A^T A + lambda_abs I
  double lambda_abs = 0.0;

  std::size_t region_size() const { return mask.size(); }
  std::size_t shape_count() const { return static_cast<std::size_t>(jacobian.cols()); }
  std::size_t rows() const { return static_cast<std::size_t>(jacobian.rows()); }
};

namespace detail {

inline void write_block(Eigen::MatrixXd& m, std::size_t block, int col, const Mat3& g) {
  for (int i = 0; i < 9; ++i) m(static_cast<Eigen::Index>(9 * block + i), col) = g.m[static_cast<std::size_t>(i)];
}

inline std::array<Vec3, 3> shape_triangle(const BlendshapeRig& rig, int t, std::size_t k) {
  const auto& tri = rig.neutral.triangles[static_cast<std::size_t>(t)];
  std::array<Vec3, 3> out;
  for (int c = 0; c < 3; ++c) {
    const auto v = static_cast<std::size_t>(tri[c]);
    out[c] = rig.neutral.vertices[v] + rig.deltas[k][v];
  }
  return out;
}

}  // namespace detail

/// Assembles the Jacobian and factorizes the normal matrix. Column k of A
/// stacks, per masked triangle, the gradient difference between shape k
/// fully applied and the neutral, times the rest-frame inverse -- i.e.
/// exactly F_j(e_k) - F_j(0). Throws DegenerateTriangle if a masked
/// triangle collapses on the neutral mesh, SingularSystem when lambda is
/// zero and A^T A is rank-deficient beyond condition 1e12.
inline DtSystem build_system(const BlendshapeRig& rig, const RegionMask& mask,
                             const SolveConfig& cfg) {
  if (rig.shape_count() == 0) throw Error("rig has no blendshapes");
  if (mask.triangle_indices.empty()) throw Error("region mask is empty");
  const std::size_t region = mask.triangle_indices.size();
  const std::size_t shapes = rig.shape_count();

  DtSystem sys;
  sys.mask = mask.triangle_indices;
  sys.rest_inverse.reserve(region);
  sys.rest_gradient.reserve(region);
  sys.jacobian.setZero(static_cast<Eigen::Index>(9 * region), static_cast<Eigen::Index>(shapes));

  for (std::size_t j = 0; j < region; ++j) {
    const int t = sys.mask[j];
    const auto rest = rig.neutral.triangle(t);
    const Mat3 frame = triangle_frame(rest[0], rest[1], rest[2]);
    const Mat3 inv = frame.inverse();
    sys.rest_inverse.push_back(inv);
    sys.rest_gradient.push_back(frame * inv);
    for (std::size_t k = 0; k < shapes; ++k) {
      const auto deformed = detail::shape_triangle(rig, t, k);
      const Mat3 dframe =
          detail::triangle_frame_unchecked(deformed[0], deformed[1], deformed[2]) - frame;
      detail::write_block(sys.jacobian, j, static_cast<int>(k), dframe * inv);
    }
  }

  const Eigen::MatrixXd normal = sys.jacobian.transpose() * sys.jacobian;
  const double trace = normal.trace();
  sys.lambda_abs = cfg.lambda * (trace > 0.0 ? trace / static_cast<double>(shapes) : 1.0);

  if (sys.lambda_abs == 0.0) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(normal);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e12)
      throw SingularSystem("normal matrix is rank-deficient and lambda is zero");
  }

  Eigen::MatrixXd regularized = normal;
  regularized.diagonal().array() += sys.lambda_abs;
  sys.normal_factor.compute(regularized);
  if (sys.normal_factor.info() != Eigen::Success)
    throw SingularSystem("Cholesky factorization of the normal matrix failed");
  return sys;
}

/// Right-hand side for target gradient T: per masked triangle the block
/// vec(T - F_j(0)), row-major, in the Jacobian's row order. Refreshing b
/// never touches the system.
inline void target_rhs(const DtSystem& sys, const Mat3& target, Eigen::VectorXd& b) {
  b.resize(static_cast<Eigen::Index>(sys.rows()));
  for (std::size_t j = 0; j < sys.region_size(); ++j) {
    const Mat3 diff = target - sys.rest_gradient[j];
    for (int i = 0; i < 9; ++i)
      b(static_cast<Eigen::Index>(9 * j + static_cast<std::size_t>(i))) = diff.m[static_cast<std::size_t>(i)];
  }
}

inline Eigen::VectorXd target_rhs(const DtSystem& sys, const Mat3& target) {
  Eigen::VectorXd b;
  target_rhs(sys, target, b);
  return b;
}

/// Solves (A^T A + lambda I) w = A^T b through the precomputed
/// factorization, then clamps to [0, 1] when cfg.clamp is set. The
/// residual energy is evaluated at the returned weights. Deterministic:
/// identical inputs give bitwise-identical weights. cfg.lambda is fixed at
/// build time; only cfg.clamp is consulted here.
inline FrameSolution solve(const DtSystem& sys, const Eigen::VectorXd& b, const SolveConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  if (static_cast<std::size_t>(b.size()) != sys.rows())
    throw DimensionMismatch("rhs has " + std::to_string(b.size()) + " rows, system expects " +
                            std::to_string(sys.rows()));
  Eigen::VectorXd w = sys.normal_factor.solve(sys.jacobian.transpose() * b);
  if (cfg.clamp)
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = std::clamp(w(i), 0.0, 1.0);
  FrameSolution out;
  out.residual_energy = (sys.jacobian * w - b).squaredNorm();
  out.weights.assign(w.data(), w.data() + w.size());
  out.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Direct mesh-space energy sum_{j in mask} |F_j(w) - T|_F^2, computed from
/// the deformed triangles themselves. Never touches a DtSystem; this is the
/// independent oracle the solver is tested against.
inline double energy(const BlendshapeRig& rig, const RegionMask& mask, std::span<const double> w,
                     const Mat3& target) {
  if (w.size() != rig.shape_count())
    throw WeightLengthMismatch("got " + std::to_string(w.size()) + " weights for " +
                               std::to_string(rig.shape_count()) + " shapes");
  double total = 0.0;
  std::array<Vec3, 3> deformed;
  for (int t : mask.triangle_indices) {
    const auto rest = rig.neutral.triangle(t);
    const auto& tri = rig.neutral.triangles[static_cast<std::size_t>(t)];
    for (int c = 0; c < 3; ++c) {
      Vec3 p = rest[static_cast<std::size_t>(c)];
      for (std::size_t k = 0; k < rig.shape_count(); ++k)
        p += rig.deltas[k][static_cast<std::size_t>(tri[c])] * w[k];
      deformed[static_cast<std::size_t>(c)] = p;
    }
    total += frobenius_sq(deformation_gradient(rest, deformed) - target);
  }
  return total;
}

}  // namespace imujaw
