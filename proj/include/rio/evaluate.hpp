#pragma once

// Trajectory accuracy metrics: RMSE ATE with optional SE(3) alignment and
// RPE over fixed-length path segments.

#include <Eigen/Geometry>

#include <stdexcept>
#include <vector>

#include "rio/geometry.hpp"

namespace rio {

struct TrajectorySample {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  UnitQuaternion orientation;
};

struct TrajectoryEstimate {
  std::vector<TrajectorySample> samples;  // strictly increasing timestamps
};

struct EvaluationOptions {
  bool align = true;                 // SE(3) Umeyama alignment before ATE
  double association_tol = 0.01;     // s, nearest-timestamp matching
  double segment_length = 1.0;       // m, RPE segment
  int min_associations = 10;
};

struct Metrics {
  double ate = 0.0;    // m, RMSE after (optional) alignment
  double rpe_t = 0.0;  // m/m
  double rpe_r = 0.0;  // deg/m
  int associations = 0;
  int rpe_pairs = 0;
};

struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Metrics evaluate(const TrajectoryEstimate& est,
                        const TrajectoryEstimate& gt,
                        const EvaluationOptions& opts = {}) {
  // Associate by nearest ground-truth timestamp within tolerance.
  std::vector<std::pair<TrajectorySample, TrajectorySample>> pairs;
  size_t j = 0;
  for (const auto& s : est.samples) {
    while (j + 1 < gt.samples.size() &&
           std::abs(gt.samples[j + 1].t - s.t) <= std::abs(gt.samples[j].t - s.t)) {
      ++j;
    }
    if (j < gt.samples.size() &&
        std::abs(gt.samples[j].t - s.t) <= opts.association_tol) {
      pairs.push_back({s, gt.samples[j]});
    }
  }
  if (static_cast<int>(pairs.size()) < opts.min_associations) {
    throw EvaluationError("evaluate: fewer than " +
                          std::to_string(opts.min_associations) +
                          " associated poses");
  }

  Metrics m;
  m.associations = static_cast<int>(pairs.size());

  Mat3 r_align = Mat3::Identity();
  Vec3 t_align = Vec3::Zero();
  if (opts.align) {
    Eigen::MatrixXd src(3, pairs.size()), dst(3, pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
      src.col(i) = pairs[i].first.position;
      dst.col(i) = pairs[i].second.position;
    }
    const Eigen::Matrix4d tform = Eigen::umeyama(src, dst, false);
    r_align = tform.topLeftCorner<3, 3>();
    t_align = tform.topRightCorner<3, 1>();
  }

  double sq = 0.0;
  for (const auto& [e, g] : pairs) {
    sq += (r_align * e.position + t_align - g.position).squaredNorm();
  }
  m.ate = std::sqrt(sq / pairs.size());

  // RPE over ~segment_length of ground-truth path.
  std::vector<double> cumlen(pairs.size(), 0.0);
  for (size_t i = 1; i < pairs.size(); ++i) {
    cumlen[i] = cumlen[i - 1] +
                (pairs[i].second.position - pairs[i - 1].second.position).norm();
  }
  double sq_t = 0.0, sq_r = 0.0;
  int count = 0;
  size_t hi = 0;
  for (size_t lo = 0; lo < pairs.size(); ++lo) {
    if (hi < lo) hi = lo;
    while (hi + 1 < pairs.size() &&
           cumlen[hi] - cumlen[lo] < opts.segment_length) {
      ++hi;
    }
    const double seg = cumlen[hi] - cumlen[lo];
    if (seg < 0.5 * opts.segment_length) continue;

    const auto& [e0, g0] = pairs[lo];
    const auto& [e1, g1] = pairs[hi];
    // Relative motions in their own local frames.
    const Mat3 re0 = e0.orientation.to_rotation_matrix();
    const Mat3 rg0 = g0.orientation.to_rotation_matrix();
    const Vec3 de = re0.transpose() * (e1.position - e0.position);
    const Vec3 dg = rg0.transpose() * (g1.position - g0.position);
    const UnitQuaternion qe = e0.orientation.conjugate() * e1.orientation;
    const UnitQuaternion qg = g0.orientation.conjugate() * g1.orientation;
    sq_t += (de - dg).squaredNorm() / (seg * seg);
    const double angle_err = quat_log(qg.conjugate() * qe).norm();
    sq_r += angle_err * angle_err / (seg * seg);
    ++count;
  }
  if (count > 0) {
    m.rpe_t = std::sqrt(sq_t / count);
    m.rpe_r = std::sqrt(sq_r / count) * 180.0 / M_PI;
    m.rpe_pairs = count;
  }
  return m;
}

}  // namespace rio
