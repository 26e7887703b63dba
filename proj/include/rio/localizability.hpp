#pragma once

// Per-axis geometric observability from plane correspondences: accumulate
// the registration Hessian, score points against its eigen-axes, and build
// the null-space projector for under-constrained directions.

#include <Eigen/Eigenvalues>

#include <array>
#include <vector>

#include "rio/geometry.hpp"

namespace rio {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// One plane correspondence: point position (sensor-centered frame, world
// orientation) and its unit plane normal.
struct SurfacePoint {
  Vec3 position;
  Vec3 normal;
};

struct LocalizabilityHessian {
  Mat6 lambda = Mat6::Zero();

  Mat3 translation_block() const { return lambda.topLeftCorner<3, 3>(); }
  Mat3 rotation_block() const { return lambda.bottomRightCorner<3, 3>(); }
};

inline LocalizabilityHessian accumulate(const std::vector<SurfacePoint>& points) {
  LocalizabilityHessian h;
  for (const auto& sp : points) {
    Vec6 row;
    row.head<3>() = sp.normal;
    row.tail<3>() = sp.position.cross(sp.normal);
    h.lambda += row * row.transpose();
  }
  return h;
}

// Eigen-axes of the translational and rotational blocks, ascending by
// eigenvalue, signs fixed so the first non-negligible component is positive.
struct LocalizabilityBasis {
  Mat3 translation_axes = Mat3::Identity();  // columns
  Vec3 translation_eigenvalues = Vec3::Zero();
  Mat3 rotation_axes = Mat3::Identity();
  Vec3 rotation_eigenvalues = Vec3::Zero();
};

namespace detail {
inline void fix_sign(Mat3& axes) {
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < 3; ++r) {
      if (std::abs(axes(r, c)) > 1e-9) {
        if (axes(r, c) < 0.0) axes.col(c) = -axes.col(c);
        break;
      }
    }
  }
}
}  // namespace detail

inline LocalizabilityBasis eigen_basis(const LocalizabilityHessian& h) {
  LocalizabilityBasis b;
  Eigen::SelfAdjointEigenSolver<Mat3> est(h.translation_block());
  b.translation_axes = est.eigenvectors();
  b.translation_eigenvalues = est.eigenvalues();
  Eigen::SelfAdjointEigenSolver<Mat3> esr(h.rotation_block());
  b.rotation_axes = esr.eigenvectors();
  b.rotation_eigenvalues = esr.eigenvalues();
  detail::fix_sign(b.translation_axes);
  detail::fix_sign(b.rotation_axes);
  return b;
}

// 6-DoF localizability score of one point: projections of the normal onto
// the translation eigen-axes and of the normalized moment arm onto the
// rotation eigen-axes. A zero moment arm carries no rotational information.
inline Vec6 score_point(const LocalizabilityBasis& basis, const SurfacePoint& sp) {
  Vec6 s;
  s.head<3>() = basis.translation_axes.transpose() * sp.normal;
  const Vec3 arm = sp.position.cross(sp.normal);
  const double arm_norm = arm.norm();
  if (arm_norm < 1e-12) {
    s.tail<3>().setZero();
  } else {
    s.tail<3>() = basis.rotation_axes.transpose() * (arm / arm_norm);
  }
  return s;
}

inline std::vector<Vec6> score_points(const LocalizabilityBasis& basis,
                                      const std::vector<SurfacePoint>& points) {
  std::vector<Vec6> scores;
  scores.reserve(points.size());
  for (const auto& sp : points) scores.push_back(score_point(basis, sp));
  return scores;
}

// Constraint rows spanning the under-constrained axes, plus the cached
// pseudo-inverse factor for the null-space projection.
struct ConstraintMatrix {
  Eigen::MatrixXd c;        // d x 6, orthonormal rows (d may be 0)
  Eigen::MatrixXd upsilon;  // 6 x d, C^T (C C^T)^-1
  std::array<int, 6> informative_counts{};
  std::array<bool, 6> under_constrained{};

  int dimension() const { return static_cast<int>(c.rows()); }
  bool empty() const { return c.rows() == 0; }
};

inline ConstraintMatrix build_constraints(const LocalizabilityBasis& basis,
                                          const std::vector<Vec6>& scores,
                                          double eta, int n_min) {
  ConstraintMatrix out;
  for (const auto& s : scores) {
    for (int i = 0; i < 6; ++i) {
      if (std::abs(s[i]) > eta) ++out.informative_counts[i];
    }
  }
  std::vector<Vec6> rows;
  for (int i = 0; i < 6; ++i) {
    out.under_constrained[i] = out.informative_counts[i] < n_min;
    if (!out.under_constrained[i]) continue;
    Vec6 row = Vec6::Zero();
    if (i < 3) {
      row.head<3>() = basis.translation_axes.col(i);
    } else {
      row.tail<3>() = basis.rotation_axes.col(i - 3);
    }
    rows.push_back(row);
  }
  out.c.resize(static_cast<int>(rows.size()), 6);
  for (size_t r = 0; r < rows.size(); ++r) out.c.row(static_cast<int>(r)) = rows[r];
  if (!rows.empty()) {
    out.upsilon =
        out.c.transpose() * (out.c * out.c.transpose()).ldlt().solve(
                                Eigen::MatrixXd::Identity(out.c.rows(), out.c.rows()));
  } else {
    out.upsilon.resize(6, 0);
  }
  return out;
}

// Orthogonal projection of the increment onto null(C); identity when C is
// empty. Projecting twice equals projecting once.
inline Vec6 project_increment(const Vec6& delta, const ConstraintMatrix& cm) {
  if (cm.empty()) return delta;
  return delta - cm.upsilon * (cm.c * delta);
}

}  // namespace rio
