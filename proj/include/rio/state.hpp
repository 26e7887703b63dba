#pragma once

// The 30-dim spline state and its covariance: IEKF prediction with knot
// advancement, iterated constrained updates in information form, and the
// window extraction used by every measurement model.
//
// State layout: [ translation control points (12) | orientation increments
// (12) | accel bias (3) | gyro bias (3) ].

#include <Eigen/Cholesky>

#include <functional>
#include <vector>

#include "rio/localizability.hpp"
#include "rio/spline.hpp"

namespace rio {

inline constexpr int kStateDim = 30;
inline constexpr int kPosOffset = 0;
inline constexpr int kOriOffset = 12;
inline constexpr int kBaOffset = 24;
inline constexpr int kBgOffset = 27;
// Sub-blocks of the newest knot, the only ones the constraint projection
// touches.
inline constexpr int kNewestPosOffset = 9;
inline constexpr int kNewestOriOffset = 21;

using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using StateCov = Eigen::Matrix<double, kStateDim, kStateDim>;

struct FilterState {
  StateVec x = StateVec::Zero();
  StateCov P = StateCov::Zero();
  UnitQuaternion lagged_orientation;
  Mat3 lagged_cov = Mat3::Zero();  // rotation-vector parameterization
  long knot_index = 3;             // index i of the newest control point
  double newest_knot_time = 0.3;   // t_i
  double dt = 0.1;

  Vec3 translation_cp(int k) const { return x.segment<3>(kPosOffset + 3 * k); }
  Vec3 orientation_increment(int k) const {
    return x.segment<3>(kOriOffset + 3 * k);
  }
  Vec3 accel_bias() const { return x.segment<3>(kBaOffset); }
  Vec3 gyro_bias() const { return x.segment<3>(kBgOffset); }
};

// Lossless re-pack of the spline portion of the state for evaluation.
inline SplineWindow state_to_window(const FilterState& s) {
  SplineWindow w;
  w.dt = s.dt;
  w.start_time = s.newest_knot_time - 3.0 * s.dt;
  for (int k = 0; k < 4; ++k) {
    w.translation_cps[k] = s.translation_cp(k);
    w.orientation_increments[k] = s.orientation_increment(k);
  }
  w.lagged_orientation = s.lagged_orientation;
  return w;
}

inline SplineWindow state_to_window(const FilterState& s, const StateVec& x) {
  FilterState tmp = s;
  tmp.x = x;
  return state_to_window(tmp);
}

// Inverse of state_to_window for the spline blocks; biases are untouched.
inline void window_to_state(const SplineWindow& w, FilterState& s) {
  for (int k = 0; k < 4; ++k) {
    s.x.segment<3>(kPosOffset + 3 * k) = w.translation_cps[k];
    s.x.segment<3>(kOriOffset + 3 * k) = w.orientation_increments[k];
  }
  s.lagged_orientation = w.lagged_orientation;
  s.dt = w.dt;
  s.newest_knot_time = w.start_time + 3.0 * w.dt;
}

struct ProcessNoise {
  double sigma_translation = 0.05;  // m, newest control point
  double sigma_increment = 0.01;    // rad
  double sigma_accel_bias = 1e-3;
  double sigma_gyro_bias = 1e-4;
};

struct ProcessModel {
  StateCov A = StateCov::Identity();
  StateCov Q = StateCov::Zero();
};

// Transition: the first three knots shift down, the newest translation knot
// extrapolates as -t_{i-3} + 2 t_{i-1} and the newest increment repeats
// delta_{i-2}. Process noise enters only through the newly created blocks
// and the bias random walks.
inline ProcessModel make_process_model(const ProcessNoise& n = {}) {
  ProcessModel m;
  m.A.setZero();
  const Mat3 id = Mat3::Identity();
  for (int k = 0; k < 3; ++k) {
    m.A.block<3, 3>(kPosOffset + 3 * k, kPosOffset + 3 * (k + 1)) = id;
    m.A.block<3, 3>(kOriOffset + 3 * k, kOriOffset + 3 * (k + 1)) = id;
  }
  m.A.block<3, 3>(kNewestPosOffset, kPosOffset) = -id;
  m.A.block<3, 3>(kNewestPosOffset, kPosOffset + 6) = 2.0 * id;
  m.A.block<3, 3>(kNewestOriOffset, kOriOffset + 3) = id;
  m.A.block<3, 3>(kBaOffset, kBaOffset) = id;
  m.A.block<3, 3>(kBgOffset, kBgOffset) = id;

  m.Q.block<3, 3>(kNewestPosOffset, kNewestPosOffset) =
      n.sigma_translation * n.sigma_translation * id;
  m.Q.block<3, 3>(kNewestOriOffset, kNewestOriOffset) =
      n.sigma_increment * n.sigma_increment * id;
  m.Q.block<3, 3>(kBaOffset, kBaOffset) =
      n.sigma_accel_bias * n.sigma_accel_bias * id;
  m.Q.block<3, 3>(kBgOffset, kBgOffset) =
      n.sigma_gyro_bias * n.sigma_gyro_bias * id;
  return m;
}

// Advance one knot: fold the oldest increment into the lagged quaternion
// (composing its marginal covariance to first order), then apply the linear
// transition to mean and covariance.
inline FilterState predict(const FilterState& s, const ProcessModel& m) {
  FilterState out = s;

  const Vec3 folded = s.orientation_increment(0);
  const Mat3 folded_cov = s.P.block<3, 3>(kOriOffset, kOriOffset);
  out.lagged_orientation = s.lagged_orientation * quat_exp(folded);
  const Mat3 r = quat_exp(folded).to_rotation_matrix();
  const Mat3 jr = so3_right_jacobian(folded);
  out.lagged_cov = r.transpose() * s.lagged_cov * r + jr * folded_cov * jr.transpose();
  out.lagged_cov = symmetrize(out.lagged_cov);

  out.x = m.A * s.x;
  out.P = m.A * s.P * m.A.transpose() + m.Q;
  out.P = 0.5 * (out.P + out.P.transpose());
  out.knot_index = s.knot_index + 1;
  out.newest_knot_time = s.newest_knot_time + s.dt;
  return out;
}

enum class ResidualSource { plane, distribution, doppler, gyro, gravity };

// One measurement's residual, Jacobian row(s) over the 30-dim state, and
// measurement covariance.
struct ResidualBlock {
  Eigen::VectorXd r;
  Eigen::MatrixXd H;  // rows x 30
  Eigen::MatrixXd R;  // rows x rows, positive definite
  ResidualSource source = ResidualSource::plane;
};

using AssembleFn = std::function<std::vector<ResidualBlock>(const StateVec&)>;

struct UpdateReport {
  int iterations = 0;
  bool converged = false;
  bool empty_residuals = false;
  bool regularized = false;
  int objective_increases = 0;
  std::vector<double> objectives;  // MAP objective per iteration
};

// Iterated update in information form. Per iteration
//   S = H^T R^-1 H + P^-1,   dx = S^-1 (H^T R^-1 r - P^-1 (x - x_prior)),
// which is algebraically the paper's gain/increment pair. The increment of
// the newest knot (translation + orientation) is projected through the
// localizability constraint before being applied. The posterior covariance
// is S^-1 from the final iteration.
inline FilterState iterated_update(const FilterState& prior,
                                   const AssembleFn& assemble,
                                   const ConstraintMatrix& constraints,
                                   double epsilon, int max_iters,
                                   UpdateReport* report = nullptr) {
  UpdateReport local;
  UpdateReport& rep = report ? *report : local;
  rep = UpdateReport{};

  FilterState out = prior;
  const Eigen::LDLT<StateCov> prior_ldlt(prior.P);
  const StateCov prior_info =
      0.5 * (prior_ldlt.solve(StateCov::Identity()) +
             prior_ldlt.solve(StateCov::Identity()).transpose());
  StateVec x = prior.x;
  StateCov S_last = StateCov::Zero();
  bool have_S = false;

  for (int j = 0; j < max_iters; ++j) {
    const std::vector<ResidualBlock> blocks = assemble(x);
    ++rep.iterations;
    if (blocks.empty()) {
      if (j == 0) {
        rep.empty_residuals = true;
        return prior;
      }
      break;
    }

    const StateVec dev = x - prior.x;
    const StateVec prior_pull = prior_info * dev;
    StateCov S = prior_info;
    StateVec g = -prior_pull;
    double residual_cost = 0.0;
    for (const auto& b : blocks) {
      const Eigen::LDLT<Eigen::MatrixXd> rl(b.R);
      const Eigen::MatrixXd rinv_h = rl.solve(Eigen::MatrixXd(b.H));
      const Eigen::VectorXd rinv_r = rl.solve(Eigen::VectorXd(b.r));
      S.noalias() += b.H.transpose() * rinv_h;
      g.noalias() += b.H.transpose() * rinv_r;
      residual_cost += b.r.dot(rinv_r);
    }
    rep.objectives.push_back(dev.dot(prior_pull) + residual_cost);
    if (rep.objectives.size() > 1 &&
        rep.objectives.back() >
            rep.objectives[rep.objectives.size() - 2] +
                1e-12 * std::abs(rep.objectives.back())) {
      ++rep.objective_increases;
    }
    S = 0.5 * (S + S.transpose());

    Eigen::LDLT<StateCov> solver(S);
    if (solver.info() != Eigen::Success || !solver.isPositive()) {
      S += (1e-9 * S.trace() / kStateDim + 1e-12) * StateCov::Identity();
      solver.compute(S);
      rep.regularized = true;
    }
    StateVec dx = solver.solve(g);

    if (!constraints.empty()) {
      Vec6 sub;
      sub.head<3>() = dx.segment<3>(kNewestPosOffset);
      sub.tail<3>() = dx.segment<3>(kNewestOriOffset);
      const Vec6 projected = project_increment(sub, constraints);
      dx.segment<3>(kNewestPosOffset) = projected.head<3>();
      dx.segment<3>(kNewestOriOffset) = projected.tail<3>();
    }

    x += dx;
    S_last = S;
    have_S = true;
    if (dx.norm() < epsilon) {
      rep.converged = true;
      break;
    }
  }

  out.x = x;
  if (have_S) {
    Eigen::LDLT<StateCov> solver(S_last);
    out.P = solver.solve(StateCov::Identity());
    out.P = 0.5 * (out.P + out.P.transpose());
  }
  return out;
}

}  // namespace rio
