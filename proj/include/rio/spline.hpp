#pragma once

// Cubic B-spline pose evaluation on a 4-knot window: translation from
// control points, orientation from a cumulative quaternion spline anchored
// at a lagged quaternion, plus the analytic Jacobians w.r.t. the window.

#include <array>
#include <stdexcept>

#include "rio/geometry.hpp"

namespace rio {

// Basis weights at normalized time u in [0,1); derivative entries carry the
// 1/dt factors so they are per-second quantities.
struct BasisWeights {
  double u = 0.0;
  double dt = 0.0;
  std::array<double, 4> m{};         // translation weights
  std::array<double, 4> m_d{};       // d m / dt
  std::array<double, 4> m_dd{};      // d^2 m / dt^2
  std::array<double, 4> lambda{};    // cumulative weights
  std::array<double, 4> lambda_d{};  // d lambda / dt
};

namespace detail {
// Basis matrix rows (control point k) by powers of u, times 6.
inline constexpr double kBasis[4][4] = {
    {1, -3, 3, -1}, {4, 0, -6, 3}, {1, 3, 3, -3}, {0, 0, 0, 1}};
// Cumulative blending matrix, times 6.
inline constexpr double kCumulative[4][4] = {
    {6, 0, 0, 0}, {5, 3, -3, 1}, {1, 3, 3, -2}, {0, 0, 0, 1}};
}  // namespace detail

inline BasisWeights basis(double u, double dt) {
  if (!(u >= 0.0 && u < 1.0)) {
    throw std::invalid_argument("basis: u outside [0,1)");
  }
  BasisWeights b;
  b.u = u;
  b.dt = dt;
  const double u2 = u * u;
  for (int k = 0; k < 4; ++k) {
    const double* row = detail::kBasis[k];
    const double* crow = detail::kCumulative[k];
    b.m[k] = (row[0] + row[1] * u + row[2] * u2 + row[3] * u2 * u) / 6.0;
    b.m_d[k] = (row[1] + 2.0 * row[2] * u + 3.0 * row[3] * u2) / (6.0 * dt);
    b.m_dd[k] = (2.0 * row[2] + 6.0 * row[3] * u) / (6.0 * dt * dt);
    b.lambda[k] = (crow[0] + crow[1] * u + crow[2] * u2 + crow[3] * u2 * u) / 6.0;
    b.lambda_d[k] = (crow[1] + 2.0 * crow[2] * u + 3.0 * crow[3] * u2) / (6.0 * dt);
  }
  return b;
}

// Active window: four knots (i-3..i) plus the lagged quaternion anchor.
// Evaluation is defined on [knot_time(2), knot_time(3)).
struct SplineWindow {
  double start_time = 0.0;  // knot time of the oldest control point, t_{i-3}
  double dt = 0.1;
  std::array<Vec3, 4> translation_cps{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(),
                                      Vec3::Zero()};
  std::array<RotVec, 4> orientation_increments{
      RotVec::Zero(), RotVec::Zero(), RotVec::Zero(), RotVec::Zero()};
  UnitQuaternion lagged_orientation;

  double knot_time(int k) const { return start_time + k * dt; }
  double window_begin() const { return knot_time(2); }
  double window_end() const { return knot_time(3); }

  double normalized_time(double t) const {
    double u = (t - window_begin()) / dt;
    if (u < 0.0 && u > -1e-9) u = 0.0;
    if (!(u >= 0.0 && u < 1.0)) {
      throw std::out_of_range("spline: timestamp outside the active window");
    }
    return u;
  }
};

inline Vec3 eval_translation(const SplineWindow& w, double t) {
  const BasisWeights b = basis(w.normalized_time(t), w.dt);
  Vec3 p = Vec3::Zero();
  for (int k = 0; k < 4; ++k) p += b.m[k] * w.translation_cps[k];
  return p;
}

inline Vec3 eval_velocity(const SplineWindow& w, double t) {
  const BasisWeights b = basis(w.normalized_time(t), w.dt);
  Vec3 v = Vec3::Zero();
  for (int k = 0; k < 4; ++k) v += b.m_d[k] * w.translation_cps[k];
  return v;
}

inline Vec3 eval_acceleration(const SplineWindow& w, double t) {
  const BasisWeights b = basis(w.normalized_time(t), w.dt);
  Vec3 a = Vec3::Zero();
  for (int k = 0; k < 4; ++k) a += b.m_dd[k] * w.translation_cps[k];
  return a;
}

// Jacobian of translation (or its time derivatives) w.r.t. the 12 stacked
// control-point coordinates: a row of scaled identity blocks.
inline Eigen::Matrix<double, 3, 12> translation_jacobian(const BasisWeights& b,
                                                         int derivative = 0) {
  Eigen::Matrix<double, 3, 12> j = Eigen::Matrix<double, 3, 12>::Zero();
  for (int k = 0; k < 4; ++k) {
    const double wk = derivative == 0   ? b.m[k]
                      : derivative == 1 ? b.m_d[k]
                                        : b.m_dd[k];
    j.block<3, 3>(0, 3 * k) = wk * Mat3::Identity();
  }
  return j;
}

// Everything the residual models need from the orientation spline at one
// timestamp. Jacobians are filled only when requested.
struct OrientationEval {
  UnitQuaternion q;  // world-from-body
  Vec3 omega = Vec3::Zero();  // body-frame angular velocity, rad/s
  std::array<Eigen::Matrix<double, 4, 3>, 4> dq_ddelta{};
  Mat4 dq_dlagged = Mat4::Zero();
  Eigen::Matrix<double, 3, 12> domega_ddelta =
      Eigen::Matrix<double, 3, 12>::Zero();
};

inline OrientationEval orientation_eval(const SplineWindow& w, double t,
                                        bool with_jacobians = false) {
  const BasisWeights b = basis(w.normalized_time(t), w.dt);

  std::array<RotVec, 4> nu;
  std::array<UnitQuaternion, 4> exps;
  for (int k = 0; k < 4; ++k) {
    nu[k] = b.lambda[k] * w.orientation_increments[k];
    exps[k] = quat_exp(nu[k]);
  }

  // Prefix products q_lagged * Exp(nu_0) * ... and suffix products.
  std::array<UnitQuaternion, 5> prefix;  // prefix[j] = lagged * prod_{k<j}
  prefix[0] = w.lagged_orientation;
  for (int k = 0; k < 4; ++k) prefix[k + 1] = prefix[k] * exps[k];
  std::array<UnitQuaternion, 5> suffix;  // suffix[j] = prod_{k>j-1..}, see use
  suffix[4] = UnitQuaternion::identity();
  for (int k = 3; k >= 0; --k) suffix[k] = exps[k] * suffix[k + 1];

  OrientationEval out;
  out.q = prefix[4].normalized();

  // Body angular velocity of the cumulative product: fold increments in
  // order, rotating the accumulated rate into each newer local frame.
  Vec3 omega = Vec3::Zero();
  std::array<Mat3, 4> rot;
  for (int k = 0; k < 4; ++k) {
    rot[k] = exps[k].to_rotation_matrix();
    omega = rot[k].transpose() * omega +
            so3_right_jacobian(nu[k]) * (b.lambda_d[k] * w.orientation_increments[k]);
  }
  out.omega = omega;

  if (!with_jacobians) return out;

  for (int j = 0; j < 4; ++j) {
    out.dq_ddelta[j] = b.lambda[j] * quat_left_matrix(prefix[j]) *
                       quat_right_matrix(suffix[j + 1]) * quat_exp_jacobian(nu[j]);
  }
  // q = lagged (x) A with A the full increment product, so the Jacobian
  // w.r.t. the lagged quaternion is the right-multiplication matrix of A.
  out.dq_dlagged = quat_right_matrix(suffix[0]);

  // d omega / d delta_j through the folding recursion.
  std::array<Mat3, 4> d;  // running Jacobians for the accumulated omega
  Vec3 acc = Vec3::Zero();
  for (int k = 0; k < 4; ++k) {
    const Mat3 rt = rot[k].transpose();
    for (int j = 0; j < k; ++j) d[j] = rt * d[j];
    const Vec3 rate_k = b.lambda_d[k] * w.orientation_increments[k];
    d[k] = b.lambda[k] * rt * skew(acc) * so3_left_jacobian(nu[k]) +
           b.lambda_d[k] * so3_right_jacobian(nu[k]) +
           b.lambda[k] * so3_right_jacobian_product_jacobian(nu[k], rate_k);
    acc = rt * acc + so3_right_jacobian(nu[k]) * rate_k;
  }
  for (int j = 0; j < 4; ++j) out.domega_ddelta.block<3, 3>(0, 3 * j) = d[j];
  return out;
}

inline UnitQuaternion eval_orientation(const SplineWindow& w, double t) {
  return orientation_eval(w, t).q;
}

inline Vec3 eval_angular_velocity(const SplineWindow& w, double t) {
  return orientation_eval(w, t).omega;
}

}  // namespace rio
