#pragma once

// Quaternion / rotation-vector algebra and spherical-coordinate mappings.
//
// Conventions (fixed project-wide):
//  * Hamilton quaternions, scalar-first storage (w, x, y, z), world-from-body.
//  * Rotation vectors are axis*angle in radians.
//  * Elevation is measured from the xy-plane, not from the pole.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>

namespace rio {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using RotVec = Eigen::Vector3d;

// Series-expansion cutoff for Exp/Log and their Jacobians.
inline constexpr double kSmallAngle = 1e-8;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

inline Mat3 symmetrize(const Mat3& m) { return 0.5 * (m + m.transpose()); }

// Unit quaternion, scalar-first (w, x, y, z).
class UnitQuaternion {
 public:
  UnitQuaternion() : wxyz_(1.0, 0.0, 0.0, 0.0) {}
  UnitQuaternion(double w, double x, double y, double z) : wxyz_(w, x, y, z) {}
  explicit UnitQuaternion(const Vec4& wxyz) : wxyz_(wxyz) {}

  static UnitQuaternion identity() { return UnitQuaternion(); }

  double w() const { return wxyz_[0]; }
  double x() const { return wxyz_[1]; }
  double y() const { return wxyz_[2]; }
  double z() const { return wxyz_[3]; }
  const Vec4& wxyz() const { return wxyz_; }
  Vec3 vec() const { return wxyz_.tail<3>(); }

  double norm() const { return wxyz_.norm(); }

  UnitQuaternion normalized() const {
    return UnitQuaternion(wxyz_ / wxyz_.norm());
  }

  UnitQuaternion conjugate() const {
    return UnitQuaternion(wxyz_[0], -wxyz_[1], -wxyz_[2], -wxyz_[3]);
  }

  UnitQuaternion operator*(const UnitQuaternion& p) const {
    const double w0 = wxyz_[0];
    const Vec3 v0 = vec();
    const double w1 = p.wxyz_[0];
    const Vec3 v1 = p.vec();
    const Vec3 v = w0 * v1 + w1 * v0 + v0.cross(v1);
    return UnitQuaternion(w0 * w1 - v0.dot(v1), v.x(), v.y(), v.z());
  }

  Vec3 rotate(const Vec3& v) const {
    const Vec3 qv = vec();
    const Vec3 t = 2.0 * qv.cross(v);
    return v + wxyz_[0] * t + qv.cross(t);
  }

  Mat3 to_rotation_matrix() const {
    const double w = wxyz_[0], x = wxyz_[1], y = wxyz_[2], z = wxyz_[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
  }

 private:
  Vec4 wxyz_;
};

// Exp: rotation vector -> unit quaternion, q = [cos(t/2), sin(t/2) v/t].
inline UnitQuaternion quat_exp(const RotVec& v) {
  const double theta = v.norm();
  double half_sinc;  // sin(theta/2)/theta
  double w;
  if (theta < kSmallAngle) {
    half_sinc = 0.5 - theta * theta / 48.0;
    w = 1.0 - theta * theta / 8.0;
  } else {
    half_sinc = std::sin(0.5 * theta) / theta;
    w = std::cos(0.5 * theta);
  }
  const Vec3 xyz = half_sinc * v;
  return UnitQuaternion(w, xyz.x(), xyz.y(), xyz.z());
}

// Log: unit quaternion -> rotation vector with norm <= pi.
// The sign is fixed so that w >= 0 before taking the log (double cover).
inline RotVec quat_log(const UnitQuaternion& q_in) {
  Vec4 q = q_in.wxyz();
  if (q[0] < 0.0) q = -q;
  const Vec3 xyz = q.tail<3>();
  const double n = xyz.norm();
  const double w = q[0];
  if (n < kSmallAngle) {
    // theta/sin(theta/2)/2 ~ 2/w * (1 - n^2/(3 w^2)) near identity
    return (2.0 / w) * (1.0 - n * n / (3.0 * w * w)) * xyz;
  }
  const double theta = 2.0 * std::atan2(n, w);
  return (theta / n) * xyz;
}

// Left multiplication matrix: quat_left_matrix(q) * p == (q * p).wxyz().
inline Mat4 quat_left_matrix(const UnitQuaternion& q) {
  const double w = q.w();
  const Vec3 v = q.vec();
  Mat4 m;
  m(0, 0) = w;
  m.block<1, 3>(0, 1) = -v.transpose();
  m.block<3, 1>(1, 0) = v;
  m.block<3, 3>(1, 1) = w * Mat3::Identity() + skew(v);
  return m;
}

// Right multiplication matrix: quat_right_matrix(q) * p == (p * q).wxyz().
inline Mat4 quat_right_matrix(const UnitQuaternion& q) {
  const double w = q.w();
  const Vec3 v = q.vec();
  Mat4 m;
  m(0, 0) = w;
  m.block<1, 3>(0, 1) = -v.transpose();
  m.block<3, 1>(1, 0) = v;
  m.block<3, 3>(1, 1) = w * Mat3::Identity() - skew(v);
  return m;
}

// d Exp(v) / d v, a 4x3 matrix in (w, x, y, z) row order.
inline Eigen::Matrix<double, 4, 3> quat_exp_jacobian(const RotVec& v) {
  const double theta = v.norm();
  Eigen::Matrix<double, 4, 3> j;
  if (theta < kSmallAngle) {
    j.row(0) = -0.25 * v.transpose();
    j.bottomRows<3>() = (0.5 - theta * theta / 48.0) * Mat3::Identity() -
                        (1.0 / 24.0) * v * v.transpose();
    return j;
  }
  const Vec3 u = v / theta;
  const double s = std::sin(0.5 * theta);
  const double c = std::cos(0.5 * theta);
  j.row(0) = -(0.5 * s) * u.transpose();
  j.bottomRows<3>() =
      (s / theta) * Mat3::Identity() + (0.5 * c - s / theta) * u * u.transpose();
  return j;
}

// d(R(q) v) / d q for fixed v, a 3x4 matrix; exact on the unit sphere.
inline Eigen::Matrix<double, 3, 4> rotate_point_jacobian(
    const UnitQuaternion& q, const Vec3& v) {
  const double w = q.w();
  const Vec3 qv = q.vec();
  Eigen::Matrix<double, 3, 4> j;
  j.col(0) = 2.0 * (w * v + qv.cross(v));
  j.block<3, 3>(0, 1) = 2.0 * (-v * qv.transpose() + qv * v.transpose() +
                               qv.dot(v) * Mat3::Identity() - w * skew(v));
  return j;
}

// Lift of a body-frame rotation-vector perturbation into quaternion space:
// q(theta) = qbar * Exp(theta)  =>  dq/dtheta at 0.
inline Eigen::Matrix<double, 4, 3> quat_tangent_lift(const UnitQuaternion& q) {
  Eigen::Matrix<double, 4, 3> e0;
  e0.row(0).setZero();
  e0.bottomRows<3>() = 0.5 * Mat3::Identity();
  return quat_left_matrix(q) * e0;
}

// d Log(qbar^-1 * q) / d q evaluated at q = qbar (3x4); inverse of the lift.
inline Eigen::Matrix<double, 3, 4> quat_tangent_projection(
    const UnitQuaternion& q) {
  Eigen::Matrix<double, 3, 4> d;
  d.col(0).setZero();
  d.rightCols<3>() = 2.0 * Mat3::Identity();
  return d * quat_left_matrix(q.conjugate());
}

// SO(3) right Jacobian: Exp(v + dv) ~ Exp(v) Exp(Jr(v) dv).
inline Mat3 so3_right_jacobian(const RotVec& v) {
  const double theta = v.norm();
  const Mat3 vx = skew(v);
  if (theta < kSmallAngle) {
    return Mat3::Identity() - 0.5 * vx + (1.0 / 6.0) * vx * vx;
  }
  const double t2 = theta * theta;
  const double a = (1.0 - std::cos(theta)) / t2;
  const double b = (theta - std::sin(theta)) / (t2 * theta);
  return Mat3::Identity() - a * vx + b * vx * vx;
}

inline Mat3 so3_left_jacobian(const RotVec& v) {
  return so3_right_jacobian(-v);
}

// d(Jr(v) u) / d v for fixed u.
inline Mat3 so3_right_jacobian_product_jacobian(const RotVec& v,
                                                const Vec3& u) {
  const double theta = v.norm();
  double a, b, da_over_t, db_over_t;  // a(t), b(t), a'(t)/t, b'(t)/t
  if (theta < kSmallAngle) {
    a = 0.5 - theta * theta / 24.0;
    b = 1.0 / 6.0 - theta * theta / 120.0;
    da_over_t = -1.0 / 12.0;
    db_over_t = -1.0 / 60.0;
  } else {
    const double t2 = theta * theta;
    const double s = std::sin(theta), c = std::cos(theta);
    a = (1.0 - c) / t2;
    b = (theta - s) / (t2 * theta);
    da_over_t = (theta * s - 2.0 * (1.0 - c)) / (t2 * t2);
    db_over_t = (theta * (1.0 - c) - 3.0 * (theta - s)) / (t2 * t2 * theta);
  }
  const Vec3 vxu = v.cross(u);
  const Vec3 vxvxu = v.cross(vxu);
  return -da_over_t * vxu * v.transpose() + a * skew(u) +
         db_over_t * vxvxu * v.transpose() +
         b * (v.dot(u) * Mat3::Identity() + v * u.transpose() -
              2.0 * u * v.transpose());
}

// Spherical coordinate of one radar return: range, azimuth, elevation.
struct SphericalCoord {
  double range = 0.0;      // m, > 0
  double azimuth = 0.0;    // rad
  double elevation = 0.0;  // rad, |e| < pi/2 (from the xy-plane)
};

inline Vec3 spherical_to_cartesian(const SphericalCoord& s) {
  const double ce = std::cos(s.elevation);
  return Vec3(s.range * ce * std::cos(s.azimuth),
              s.range * ce * std::sin(s.azimuth),
              s.range * std::sin(s.elevation));
}

inline SphericalCoord cartesian_to_spherical(const Vec3& p) {
  SphericalCoord s;
  s.range = p.norm();
  if (s.range <= 0.0) throw std::invalid_argument("zero-range point");
  s.azimuth = std::atan2(p.y(), p.x());
  s.elevation = std::asin(std::clamp(p.z() / s.range, -1.0, 1.0));
  return s;
}

// Jacobian of the spherical->Cartesian mapping, d(x,y,z)/d(r,a,e).
inline Mat3 spherical_jacobian(const SphericalCoord& s) {
  const double ca = std::cos(s.azimuth), sa = std::sin(s.azimuth);
  const double ce = std::cos(s.elevation), se = std::sin(s.elevation);
  const double r = s.range;
  Mat3 g;
  g << ce * ca, -r * ce * sa, -r * se * ca,
       ce * sa,  r * ce * ca, -r * se * sa,
       se,       0.0,          r * ce;
  return g;
}

}  // namespace rio
