#pragma once

#include "rio/geometry.hpp"

namespace rio {

// One world-frame map point with its propagated covariance. The trace is
// cached because insertion and residual weighting compare it constantly.
struct MapPoint {
  Vec3 position = Vec3::Zero();  // m, world frame
  Mat3 covariance = Mat3::Zero();
  double trace = 0.0;            // tr(covariance), m^2
  double rcs = 0.0;              // dBsm
  long stamp = 0;                // insertion order, tie-break key

  static MapPoint make(const Vec3& p, const Mat3& cov, double rcs_dbsm,
                       long stamp_value) {
    MapPoint mp;
    mp.position = p;
    mp.covariance = cov;
    mp.trace = cov.trace();
    mp.rcs = rcs_dbsm;
    mp.stamp = stamp_value;
    return mp;
  }
};

}  // namespace rio
