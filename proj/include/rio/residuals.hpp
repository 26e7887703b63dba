#pragma once

// The five measurement models: point-to-plane, point-to-distribution,
// Doppler, gyroscope, and gravity direction. Each builder returns a
// ResidualBlock with the residual, its analytic Jacobian over the 30-dim
// state layout, and the measurement covariance.

#include <Eigen/Eigenvalues>

#include <optional>
#include <vector>

#include "rio/map_point.hpp"
#include "rio/state.hpp"
#include "rio/uncertainty.hpp"

namespace rio {

// Pose quantities shared by every residual at one timestamp.
struct PoseEval {
  double t = 0.0;
  BasisWeights basis;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
  OrientationEval ori;
  Mat3 R = Mat3::Identity();
  Eigen::Matrix<double, 4, 12> dq_dxq = Eigen::Matrix<double, 4, 12>::Zero();
};

inline PoseEval eval_pose(const SplineWindow& w, double t) {
  PoseEval pe;
  pe.t = t;
  pe.basis = basis(w.normalized_time(t), w.dt);
  for (int k = 0; k < 4; ++k) {
    pe.position += pe.basis.m[k] * w.translation_cps[k];
    pe.velocity += pe.basis.m_d[k] * w.translation_cps[k];
    pe.acceleration += pe.basis.m_dd[k] * w.translation_cps[k];
  }
  pe.ori = orientation_eval(w, t, true);
  pe.R = pe.ori.q.to_rotation_matrix();
  for (int k = 0; k < 4; ++k) pe.dq_dxq.block<4, 3>(0, 3 * k) = pe.ori.dq_ddelta[k];
  return pe;
}

// ---------------------------------------------------------------------------
// Local geometry fitting

struct PlaneFit {
  Vec3 normal = Vec3::Zero();     // unit
  Vec3 sample_point = Vec3::Zero();
  Mat3 covariance = Mat3::Zero();  // fitted-plane covariance
  double rms = 0.0;                // point-to-plane RMS over the neighbors
  bool reliable = false;
};

struct RcsDistribution {
  Vec3 centroid = Vec3::Zero();  // RCS-weighted
  double mean_rcs = 0.0;
};

struct PlaneFitParams {
  double tau_u = 0.5;      // m^2, per-point uncertainty bound
  double tau_pl = 0.05;    // m^2, plane covariance gate
  double rms_bound = 0.2;  // m, geometric planarity gate
};

// Covariance-weighted plane through exactly five neighbors. The weights are
// the convex uncertainty weights (tau_u - tr(Sigma_i)) / sum_j (...), the
// plane covariance is the squared-weight combination of the neighbor
// covariances, and the normal is the smallest-eigenvalue direction of the
// weighted scatter.
inline PlaneFit fit_plane(const std::vector<MapPoint>& neighbors,
                          const PlaneFitParams& params = {}) {
  if (neighbors.size() != 5) {
    throw std::invalid_argument("fit_plane: exactly five neighbors required");
  }
  PlaneFit fit;
  double denom = 0.0;
  std::array<double, 5> margin{};
  for (int i = 0; i < 5; ++i) {
    margin[i] = params.tau_u - neighbors[i].trace;
    if (margin[i] < 0.0) return fit;  // upstream gate violated
    denom += margin[i];
  }
  if (denom <= 1e-12) return fit;

  std::array<double, 5> w{};
  Vec3 centroid = Vec3::Zero();
  for (int i = 0; i < 5; ++i) {
    w[i] = margin[i] / denom;
    centroid += w[i] * neighbors[i].position;
  }
  Mat3 scatter = Mat3::Zero();
  Mat3 cov = Mat3::Zero();
  for (int i = 0; i < 5; ++i) {
    const Vec3 d = neighbors[i].position - centroid;
    scatter += w[i] * d * d.transpose();
    cov += w[i] * w[i] * neighbors[i].covariance;
  }

  Eigen::SelfAdjointEigenSolver<Mat3> es(scatter);
  const Vec3 evals = es.eigenvalues();
  if (evals[2] < 1e-18 || evals[1] < 1e-9 * evals[2]) {
    return fit;  // coincident or collinear neighbors: no plane
  }
  Vec3 n = es.eigenvectors().col(0);
  for (int i = 0; i < 3; ++i) {
    if (std::abs(n[i]) > 1e-9) {
      if (n[i] < 0.0) n = -n;
      break;
    }
  }
  fit.normal = n;
  fit.sample_point = centroid;
  fit.covariance = symmetrize(cov);

  double sq = 0.0;
  for (const auto& nb : neighbors) {
    const double d = n.dot(nb.position - centroid);
    sq += d * d;
  }
  fit.rms = std::sqrt(sq / 5.0);
  fit.reliable =
      fit.covariance.trace() <= params.tau_pl && fit.rms <= params.rms_bound;
  return fit;
}

inline RcsDistribution rcs_distribution(const std::vector<MapPoint>& neighbors) {
  RcsDistribution dist;
  double wsum = 0.0;
  for (const auto& nb : neighbors) {
    const double w = std::max(nb.rcs, 1e-3);  // dBsm values can dip negative
    dist.centroid += w * nb.position;
    dist.mean_rcs += nb.rcs;
    wsum += w;
  }
  dist.centroid /= wsum;
  dist.mean_rcs /= static_cast<double>(neighbors.size());
  return dist;
}

struct EnvWeights {
  double plane = 0.5;
  double distribution = 0.5;
  bool degenerate = false;  // both counts were zero
};

inline EnvWeights env_weights(int n_plane, int n_distribution) {
  EnvWeights w;
  const int total = n_plane + n_distribution;
  if (total <= 0) {
    w.degenerate = true;
    return w;
  }
  w.plane = static_cast<double>(n_plane) / total;
  w.distribution = static_cast<double>(n_distribution) / total;
  return w;
}

// ---------------------------------------------------------------------------
// Residual builders
//
// Weights multiply the residual and its Jacobian; the stored measurement
// covariance stays in raw units, so a weight w scales the block's
// information content by w^2.

inline ResidualBlock plane_residual(const PoseEval& pe, const Vec3& point_radar,
                                    const PlaneFit& plane, const Extrinsics& ext,
                                    double weight, const Mat3& query_world_cov) {
  const Vec3 point_body = ext.transform(point_radar);
  const Vec3 world = pe.position + pe.R * point_body;
  const double h = plane.normal.dot(world - plane.sample_point);

  ResidualBlock b;
  b.source = ResidualSource::plane;
  b.r.resize(1);
  b.r[0] = -weight * h;
  b.H.setZero(1, kStateDim);
  b.H.block<1, 12>(0, kPosOffset) =
      weight * plane.normal.transpose() * translation_jacobian(pe.basis);
  b.H.block<1, 12>(0, kOriOffset) =
      weight * plane.normal.transpose() *
      rotate_point_jacobian(pe.ori.q, point_body) * pe.dq_dxq;
  b.R.resize(1, 1);
  const double var = plane.normal.dot(plane.covariance * plane.normal) +
                     plane.normal.dot(query_world_cov * plane.normal);
  b.R(0, 0) = std::max(var, 1e-12);
  return b;
}

struct RcsWeightParams {
  double floor = 0.5;  // dBsm, clamps the RCS gap before inverting
  double max = 2.0;
};

inline double rcs_weight(double rcs_mean, double rcs_point,
                         const RcsWeightParams& params = {}) {
  const double gap = std::max(std::abs(rcs_mean - rcs_point), params.floor);
  return std::min(1.0 / gap, params.max);
}

inline std::optional<ResidualBlock> distribution_residual(
    const PoseEval& pe, const Vec3& point_radar, double point_rcs,
    const RcsDistribution& dist, const Extrinsics& ext, double weight,
    const Mat3& query_world_cov, const RcsWeightParams& rcs_params = {}) {
  const Vec3 point_body = ext.transform(point_radar);
  const Vec3 world = pe.position + pe.R * point_body;
  const Vec3 diff = world - dist.centroid;
  const double norm = diff.norm();
  if (norm < 1e-9) return std::nullopt;  // gradient undefined at coincidence

  const double w = weight * rcs_weight(dist.mean_rcs, point_rcs, rcs_params);
  const Vec3 dir = diff / norm;

  ResidualBlock b;
  b.source = ResidualSource::distribution;
  b.r.resize(1);
  b.r[0] = -w * norm;
  b.H.setZero(1, kStateDim);
  b.H.block<1, 12>(0, kPosOffset) =
      w * dir.transpose() * translation_jacobian(pe.basis);
  b.H.block<1, 12>(0, kOriOffset) =
      w * dir.transpose() * rotate_point_jacobian(pe.ori.q, point_body) *
      pe.dq_dxq;
  b.R.resize(1, 1);
  b.R(0, 0) = std::max(dir.dot(query_world_cov * dir), 1e-12);
  return b;
}

// d(R(q)^T v)/dq via the conjugate: columns 1..3 flip sign.
inline Eigen::Matrix<double, 3, 4> rotate_point_inverse_jacobian(
    const UnitQuaternion& q, const Vec3& v) {
  Eigen::Matrix<double, 3, 4> j = rotate_point_jacobian(q.conjugate(), v);
  j.rightCols<3>() *= -1.0;
  return j;
}

// Doppler: the radial speed of the sensor origin along the (normalized)
// return direction. `doppler` must already carry the sign convention that
// matches h = d^T (R^T tdot + omega x t_IR); see PipelineConfig.
inline ResidualBlock doppler_residual(const PoseEval& pe, const Vec3& point_radar,
                                      double doppler, const Extrinsics& ext,
                                      double sigma_doppler) {
  const Vec3 dir_body = (ext.rotation * point_radar).normalized();
  const Vec3 v_body = pe.R.transpose() * pe.velocity +
                      pe.ori.omega.cross(ext.translation);
  const double h = dir_body.dot(v_body);

  ResidualBlock b;
  b.source = ResidualSource::doppler;
  b.r.resize(1);
  b.r[0] = doppler - h;
  b.H.setZero(1, kStateDim);
  b.H.block<1, 12>(0, kPosOffset) = dir_body.transpose() * pe.R.transpose() *
                                    translation_jacobian(pe.basis, 1);
  const Eigen::Matrix<double, 3, 12> g2 =
      rotate_point_inverse_jacobian(pe.ori.q, pe.velocity) * pe.dq_dxq -
      skew(ext.translation) * pe.ori.domega_ddelta;
  b.H.block<1, 12>(0, kOriOffset) = dir_body.transpose() * g2;
  b.R.resize(1, 1);
  b.R(0, 0) = sigma_doppler * sigma_doppler;
  return b;
}

inline ResidualBlock gyro_residual(const PoseEval& pe, const Vec3& omega_meas,
                                   const Vec3& gyro_bias, double sigma_gyro) {
  ResidualBlock b;
  b.source = ResidualSource::gyro;
  b.r = omega_meas - (pe.ori.omega + gyro_bias);
  b.H.setZero(3, kStateDim);
  b.H.block<3, 12>(0, kOriOffset) = pe.ori.domega_ddelta;
  b.H.block<3, 3>(0, kBgOffset) = Mat3::Identity();
  b.R = sigma_gyro * sigma_gyro * Mat3::Identity();
  return b;
}

// Gravity-direction residual on the unit sphere: 1 - cos similarity between
// the gravity estimated from one accelerometer sample and the world gravity.
// Skipped when the estimated gravity nearly vanishes (free-fall-like).
inline std::optional<ResidualBlock> gravity_residual(
    const PoseEval& pe, const Vec3& accel_meas, const Vec3& accel_bias,
    const Vec3& world_gravity, double sigma_gravity, double g_min = 1.0) {
  const Vec3 specific = accel_meas - accel_bias;
  const Vec3 g = pe.R * specific - pe.acceleration;
  const double gnorm = g.norm();
  if (gnorm <= g_min) return std::nullopt;

  const Vec3 gw_hat = world_gravity.normalized();
  const Vec3 g_hat = g / gnorm;
  const double h = 1.0 - gw_hat.dot(g_hat);

  // dh/dg = -gw^T (I - g g^T) / |g|
  const Eigen::RowVector3d dh_dg =
      -gw_hat.transpose() * (Mat3::Identity() - g_hat * g_hat.transpose()) /
      gnorm;

  ResidualBlock b;
  b.source = ResidualSource::gravity;
  b.r.resize(1);
  b.r[0] = -h;
  b.H.setZero(1, kStateDim);
  b.H.block<1, 12>(0, kPosOffset) =
      dh_dg * (-translation_jacobian(pe.basis, 2));
  b.H.block<1, 12>(0, kOriOffset) =
      dh_dg * rotate_point_jacobian(pe.ori.q, specific) * pe.dq_dxq;
  b.H.block<1, 3>(0, kBaOffset) = dh_dg * (-pe.R);
  b.R.resize(1, 1);
  b.R(0, 0) = sigma_gravity * sigma_gravity;
  return b;
}

}  // namespace rio
