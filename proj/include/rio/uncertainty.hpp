#pragma once

// First-order propagation of control-point uncertainty to pose uncertainty
// at arbitrary timestamps, and compounding with per-return measurement noise
// into a world-frame point covariance.
//
// Rotation-vector (3-dim tangent) covariances are the canonical form at
// module boundaries; the 4x4 quaternion-space form appears only inside the
// orientation propagation.

#include <array>

#include "rio/geometry.hpp"
#include "rio/spline.hpp"

namespace rio {

// Radar-to-body mounting: p_body = rotation * p_radar + translation.
struct Extrinsics {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 transform(const Vec3& p_radar) const {
    return rotation * p_radar + translation;
  }
};

struct PoseCovariance {
  Mat3 translation = Mat3::Zero();   // m^2
  Mat4 quaternion = Mat4::Zero();    // quaternion-space form
  Mat3 rotation = Mat3::Zero();      // rotation-vector form, rad^2
};

struct WorldPointCovariance {
  Mat3 sigma = Mat3::Zero();  // m^2
  double trace = 0.0;
};

// Sigma_t(t) = sum_k m_k(u)^2 Sigma_k.
inline Mat3 translation_covariance(const SplineWindow& w,
                                   const std::array<Mat3, 4>& knot_covs,
                                   double t) {
  const BasisWeights b = basis(w.normalized_time(t), w.dt);
  Mat3 sigma = Mat3::Zero();
  for (int k = 0; k < 4; ++k) sigma += b.m[k] * b.m[k] * knot_covs[k];
  return symmetrize(sigma);
}

// Sigma_q(t): per-increment terms plus the lagged-anchor term. The lagged
// covariance arrives in rotation-vector form and is lifted to quaternion
// space at the anchor before propagation.
inline Mat4 orientation_covariance(const SplineWindow& w,
                                   const std::array<Mat3, 4>& delta_covs,
                                   const Mat3& lagged_cov, double t) {
  const OrientationEval ev = orientation_eval(w, t, true);
  Mat4 sigma = Mat4::Zero();
  for (int k = 0; k < 4; ++k) {
    sigma += ev.dq_ddelta[k] * delta_covs[k] * ev.dq_ddelta[k].transpose();
  }
  const Eigen::Matrix<double, 4, 3> lift =
      ev.dq_dlagged * quat_tangent_lift(w.lagged_orientation);
  sigma += lift * lagged_cov * lift.transpose();
  return 0.5 * (sigma + sigma.transpose());
}

// Spherical measurement noise mapped to Cartesian: Gamma diag(s^2) Gamma^T.
inline Mat3 measurement_covariance(const SphericalCoord& s, double sigma_r,
                                   double sigma_a, double sigma_e) {
  const Mat3 gamma = spherical_jacobian(s);
  const Vec3 d(sigma_r * sigma_r, sigma_a * sigma_a, sigma_e * sigma_e);
  return symmetrize(gamma * d.asDiagonal() * gamma.transpose());
}

// 4x4 quaternion-space covariance -> 3x3 rotation-vector covariance at q.
inline Mat3 quat_cov_to_rotvec_cov(const UnitQuaternion& q, const Mat4& sigma_q) {
  const Eigen::Matrix<double, 3, 4> j = quat_tangent_projection(q);
  return symmetrize(j * sigma_q * j.transpose());
}

// Sigma_Wp = Sigma_t + R [ip]x Sigma_R [ip]x^T R^T + R Sigma_Ip R^T,
// with Sigma_Ip = R_IR Sigma_Rp R_IR^T.
inline WorldPointCovariance world_point_covariance(const PoseCovariance& pose,
                                                   const Mat3& rotation,
                                                   const Extrinsics& ext,
                                                   const Vec3& point_body,
                                                   const Mat3& sigma_radar) {
  const Mat3 sigma_body =
      ext.rotation * sigma_radar * ext.rotation.transpose();
  const Mat3 px = skew(point_body);
  Mat3 sigma = pose.translation +
               rotation * px * pose.rotation * px.transpose() * rotation.transpose() +
               rotation * sigma_body * rotation.transpose();
  WorldPointCovariance out;
  out.sigma = symmetrize(sigma);
  out.trace = out.sigma.trace();
  return out;
}

// Convenience: full pose covariance at t from the window's per-knot blocks.
inline PoseCovariance pose_covariance(const SplineWindow& w,
                                      const std::array<Mat3, 4>& knot_covs,
                                      const std::array<Mat3, 4>& delta_covs,
                                      const Mat3& lagged_cov, double t) {
  PoseCovariance pc;
  pc.translation = translation_covariance(w, knot_covs, t);
  pc.quaternion = orientation_covariance(w, delta_covs, lagged_cov, t);
  pc.rotation = quat_cov_to_rotvec_cov(eval_orientation(w, t), pc.quaternion);
  return pc;
}

}  // namespace rio
