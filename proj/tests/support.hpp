#pragma once

// Shared helpers for the test suites: deterministic random generators and
// central finite-difference oracles.

#include <Eigen/Core>

#include <functional>
#include <random>

#include "rio/geometry.hpp"

namespace rio::test {

inline std::mt19937& rng(uint32_t seed = 0) {
  static thread_local std::mt19937 gen(seed ? seed : 12345u);
  return gen;
}

inline double uniform(double lo, double hi, std::mt19937& gen) {
  return std::uniform_real_distribution<double>(lo, hi)(gen);
}

inline Eigen::Vector3d random_vec3(std::mt19937& gen, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  return Eigen::Vector3d(d(gen), d(gen), d(gen));
}

inline Eigen::Vector3d random_unit_vec3(std::mt19937& gen) {
  Eigen::Vector3d v;
  do {
    v = random_vec3(gen);
  } while (v.norm() < 1e-3);
  return v.normalized();
}

inline rio::RotVec random_rotvec(std::mt19937& gen, double max_angle = 2.5) {
  return uniform(0.0, max_angle, gen) * random_unit_vec3(gen);
}

inline rio::UnitQuaternion random_quat(std::mt19937& gen) {
  return rio::quat_exp(random_rotvec(gen, 3.0));
}

// Central finite difference of f: R^n -> R^m at x.
inline Eigen::MatrixXd numeric_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd j(f0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

// Relative error between an analytic and a numeric Jacobian, scaled by the
// larger of the two norms (absolute when both are tiny).
inline double jacobian_error(const Eigen::MatrixXd& analytic,
                             const Eigen::MatrixXd& numeric) {
  const double scale = std::max(analytic.norm(), numeric.norm());
  const double err = (analytic - numeric).norm();
  return scale > 1e-9 ? err / scale : err;
}

}  // namespace rio::test
