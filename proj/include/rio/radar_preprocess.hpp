#pragma once

// Per-scan ego-velocity estimation from Doppler returns (RANSAC over the
// linear static-scene model), dynamic-point rejection, and the
// previous-velocity fallback for abrupt changes.

#include <random>
#include <vector>

#include "rio/geometry.hpp"

namespace rio {

struct RadarPoint {
  double time = 0.0;  // s, absolute per-point timestamp
  SphericalCoord coord;
  double doppler = 0.0;  // m/s, range-rate: approaching targets negative
  double rcs = 0.0;      // dBsm
};

struct RadarScan {
  long id = 0;
  double stamp = 0.0;  // scan start time
  std::vector<RadarPoint> points;
};

struct EgoVelocity {
  Vec3 v = Vec3::Zero();  // m/s, radar frame
  int inliers = 0;
  bool valid = false;
  bool reused = false;  // previous estimate substituted
};

struct EgoEstimationParams {
  int ransac_iterations = 100;
  double inlier_threshold = 0.25;  // m/s
  int min_fit_points = 5;
  int min_inliers = 10;
  uint32_t seed = 7;
};

// Static returns satisfy doppler = -d^T v with d the unit ray direction.
// RANSAC over 3-point minimal sets, final least squares on the consensus.
inline EgoVelocity estimate_ego_velocity(const RadarScan& scan,
                                         const EgoEstimationParams& params = {}) {
  EgoVelocity ego;
  const int n = static_cast<int>(scan.points.size());
  if (n < params.min_fit_points) return ego;

  std::vector<Vec3> dirs(n);
  std::vector<double> dop(n);
  for (int i = 0; i < n; ++i) {
    dirs[i] = spherical_to_cartesian(scan.points[i].coord).normalized();
    dop[i] = scan.points[i].doppler;
  }

  std::mt19937 gen(params.seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> best_consensus;
  for (int it = 0; it < params.ransac_iterations; ++it) {
    const int a = pick(gen), b = pick(gen), c = pick(gen);
    if (a == b || b == c || a == c) continue;
    Mat3 m;
    m.row(0) = dirs[a].transpose();
    m.row(1) = dirs[b].transpose();
    m.row(2) = dirs[c].transpose();
    if (std::abs(m.determinant()) < 1e-6) continue;
    const Vec3 v = m.inverse() * Vec3(-dop[a], -dop[b], -dop[c]);
    std::vector<int> consensus;
    for (int i = 0; i < n; ++i) {
      if (std::abs(dop[i] + dirs[i].dot(v)) <= params.inlier_threshold) {
        consensus.push_back(i);
      }
    }
    if (consensus.size() > best_consensus.size()) {
      best_consensus = std::move(consensus);
    }
  }
  if (static_cast<int>(best_consensus.size()) < params.min_inliers) return ego;

  Mat3 ata = Mat3::Zero();
  Vec3 atb = Vec3::Zero();
  for (int i : best_consensus) {
    ata += dirs[i] * dirs[i].transpose();
    atb += dirs[i] * (-dop[i]);
  }
  ego.v = ata.ldlt().solve(atb);
  ego.inliers = static_cast<int>(best_consensus.size());
  ego.valid = true;
  return ego;
}

// Keep returns consistent with the ego-velocity model; an invalid estimate
// passes the scan through untouched (caller logs the condition).
inline RadarScan filter_dynamic(const RadarScan& scan, const EgoVelocity& ego,
                                double gate) {
  if (!ego.valid) return scan;
  RadarScan out;
  out.id = scan.id;
  out.stamp = scan.stamp;
  out.points.reserve(scan.points.size());
  for (const auto& pt : scan.points) {
    const Vec3 d = spherical_to_cartesian(pt.coord).normalized();
    if (std::abs(pt.doppler + d.dot(ego.v)) <= gate) {
      out.points.push_back(pt);
    }
  }
  return out;
}

// Reuse the previous estimate when the current one is missing or jumps.
inline EgoVelocity stabilize_ego(const EgoVelocity& current,
                                 const EgoVelocity& previous, double jump) {
  if (!current.valid) {
    EgoVelocity out = previous;
    out.reused = true;
    return out;
  }
  if (previous.valid && (current.v - previous.v).norm() > jump) {
    EgoVelocity out = previous;
    out.reused = true;
    return out;
  }
  return current;
}

}  // namespace rio
