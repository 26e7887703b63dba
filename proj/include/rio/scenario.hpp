#pragma once

// Synthetic scenario generation: a ground-truth spline trajectory, a
// landmark world (plane patches + point scatterers), and the radar/IMU
// streams ray-cast from them. Deterministic under a fixed seed; at zero
// noise the streams reproduce the ground truth exactly.

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rio/evaluate.hpp"
#include "rio/io.hpp"
#include "rio/radar_preprocess.hpp"
#include "rio/spline.hpp"
#include "rio/uncertainty.hpp"

namespace rio {

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Ground truth as one long cubic spline; evaluation assembles the active
// 4-knot window on the fly.
struct GroundTruthSpline {
  double start_time = 0.0;  // knot 0
  double dt = 0.1;
  std::vector<Vec3> cps;
  std::vector<RotVec> increments;          // increments[n] = Log(q_{n-1}^-1 q_n)
  std::vector<UnitQuaternion> knot_quats;  // q_n

  double min_time() const { return start_time + 3.0 * dt; }
  double max_time() const {
    return start_time + (static_cast<double>(cps.size()) - 1.0) * dt;
  }

  SplineWindow window_at(double t) const {
    int i = static_cast<int>(std::floor((t - start_time) / dt)) + 1;
    i = std::max(4, std::min(i, static_cast<int>(cps.size()) - 1));
    SplineWindow w;
    w.dt = dt;
    w.start_time = start_time + (i - 3) * dt;
    for (int k = 0; k < 4; ++k) {
      w.translation_cps[k] = cps[i - 3 + k];
      w.orientation_increments[k] = increments[i - 3 + k];
    }
    w.lagged_orientation = knot_quats[i - 4];
    return w;
  }

  Vec3 position(double t) const { return eval_translation(window_at(t), t); }
  Vec3 velocity(double t) const { return eval_velocity(window_at(t), t); }
  Vec3 acceleration(double t) const {
    return eval_acceleration(window_at(t), t);
  }
  UnitQuaternion orientation(double t) const {
    return eval_orientation(window_at(t), t);
  }
  Vec3 angular_velocity(double t) const {
    return eval_angular_velocity(window_at(t), t);
  }
};

struct PlaneLandmark {
  Vec3 center;
  Vec3 normal;  // unit
  Vec3 u_axis;  // unit, in-plane
  Vec3 v_axis;  // unit, in-plane
  double half_u = 1.0;
  double half_v = 1.0;
  double rcs = 10.0;  // dBsm
};

struct Scatterer {
  Vec3 position;
  double rcs = 15.0;
  Vec3 velocity = Vec3::Zero();  // nonzero: a dynamic object
};

struct ScenarioSpec {
  std::string kind = "figure8";  // figure8 | tunnel | stationary
  double duration = 60.0;        // s, total stream length
  double radar_rate = 10.0;      // Hz
  double imu_rate = 100.0;       // Hz
  int returns_per_frame = 200;
  double knot_dt = 0.1;

  double sigma_range = 0.05;         // m
  double sigma_azimuth_deg = 0.5;    // deg
  double sigma_elevation_deg = 0.5;  // deg
  double sigma_doppler = 0.05;       // m/s
  double sigma_gyro = 0.002;         // rad/s
  double sigma_accel = 0.02;         // m/s^2
  double gyro_bias_walk = 1e-5;      // rad/s per sqrt(sample)
  double accel_bias_walk = 1e-4;
  Vec3 initial_gyro_bias = Vec3(0.002, -0.001, 0.0015);
  Vec3 initial_accel_bias = Vec3(0.02, -0.01, 0.015);

  double outlier_fraction = 0.0;  // multipath-like ghost returns
  int dynamic_objects = 0;

  double rest_duration = 1.2;  // s at rest (bootstrap window)
  double ramp_duration = 2.0;  // s easing into motion

  // figure8 scene
  double fig8_x = 8.0;      // m amplitude
  double fig8_y = 5.0;
  double fig8_period = 30.0;  // s per loop
  double yaw_amplitude = 0.6;
  double yaw_period = 24.0;
  double room_half = 15.0;
  int scatterer_count = 40;

  // tunnel scene
  double tunnel_speed = 3.0;       // m/s
  double tunnel_half_width = 3.0;  // m
  double tunnel_height = 4.0;
  double tunnel_feature_spacing = 4.0;  // m, repetitive wall features

  // sensor model
  double fov_azimuth_deg = 60.0;    // half-angle
  double fov_elevation_deg = 20.0;  // half-angle
  double max_range = 40.0;
  double min_range = 1.0;

  double gravity_magnitude = 9.81;
  uint32_t seed = 1;
};

struct SyntheticScenario {
  GroundTruthSpline gt;
  std::vector<PlaneLandmark> planes;
  std::vector<Scatterer> scatterers;
  std::vector<RadarScan> radar;
  std::vector<ImuSample> imu;
  TrajectoryEstimate gt_trajectory;  // at knot and frame times
};

namespace detail {

// Eased path parameter: rest, then a smooth ramp to unit rate.
inline double ease_time(double t, double rest, double ramp) {
  if (t <= rest) return 0.0;
  const double x = t - rest;
  if (x >= ramp) return x - 0.5 * ramp;
  return 0.5 * (x - (ramp / M_PI) * std::sin(M_PI * x / ramp)) *
         1.0;  // integral of (1 - cos(pi x / ramp)) / 2
}

inline void add_box_room(std::vector<PlaneLandmark>& planes, double half,
                         double height, double rcs) {
  const double hh = height / 2.0;
  planes.push_back({Vec3(half, 0, hh), Vec3(-1, 0, 0), Vec3(0, 1, 0),
                    Vec3(0, 0, 1), half, hh, rcs});
  planes.push_back({Vec3(-half, 0, hh), Vec3(1, 0, 0), Vec3(0, 1, 0),
                    Vec3(0, 0, 1), half, hh, rcs});
  planes.push_back({Vec3(0, half, hh), Vec3(0, -1, 0), Vec3(1, 0, 0),
                    Vec3(0, 0, 1), half, hh, rcs});
  planes.push_back({Vec3(0, -half, hh), Vec3(0, 1, 0), Vec3(1, 0, 0),
                    Vec3(0, 0, 1), half, hh, rcs});
  planes.push_back({Vec3(0, 0, 0), Vec3(0, 0, 1), Vec3(1, 0, 0), Vec3(0, 1, 0),
                    half, half, rcs - 4.0});
}

}  // namespace detail

inline SyntheticScenario generate_scenario(const ScenarioSpec& spec) {
  if (spec.duration <= 0.0) throw ScenarioError("duration must be positive");
  std::mt19937 gen(spec.seed);
  std::normal_distribution<double> nrm(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  SyntheticScenario out;

  // --- Ground-truth spline ---------------------------------------------
  GroundTruthSpline& gt = out.gt;
  gt.dt = spec.knot_dt;
  gt.start_time = -5.0 * spec.knot_dt;
  const int n_knots =
      static_cast<int>(std::ceil((spec.duration + 1.0) / spec.knot_dt)) + 10;

  const double om_fig8 = 2.0 * M_PI / spec.fig8_period;
  const double om_yaw = 2.0 * M_PI / spec.yaw_period;
  const double z0 = 1.5;
  for (int n = 0; n < n_knots; ++n) {
    const double t = gt.start_time + n * gt.dt;
    const double tau = detail::ease_time(t, spec.rest_duration, spec.ramp_duration);
    Vec3 p;
    double yaw = 0.0;
    if (spec.kind == "figure8") {
      p = Vec3(spec.fig8_x * std::sin(om_fig8 * tau),
               spec.fig8_y * std::sin(2.0 * om_fig8 * tau), z0);
      yaw = spec.yaw_amplitude * std::sin(om_yaw * tau);
    } else if (spec.kind == "tunnel") {
      p = Vec3(0.4 * std::sin(0.4 * tau), spec.tunnel_speed * tau, z0);
      yaw = 0.08 * std::sin(0.5 * tau);
    } else if (spec.kind == "stationary") {
      p = Vec3(0, 0, z0);
    } else {
      throw ScenarioError("unknown scenario kind: " + spec.kind);
    }
    gt.cps.push_back(p);
    gt.knot_quats.push_back(quat_exp(Vec3(0, 0, yaw)));
    if (n == 0) {
      gt.increments.push_back(RotVec::Zero());
    } else {
      gt.increments.push_back(
          quat_log(gt.knot_quats[n - 1].conjugate() * gt.knot_quats[n]));
    }
  }

  // --- Landmarks ---------------------------------------------------------
  if (spec.kind == "tunnel") {
    const double len = spec.tunnel_speed * spec.duration + 30.0;
    const double hw = spec.tunnel_half_width;
    const double hh = spec.tunnel_height / 2.0;
    out.planes.push_back({Vec3(hw, len / 2 - 10, hh), Vec3(-1, 0, 0),
                          Vec3(0, 1, 0), Vec3(0, 0, 1), len / 2, hh, 12.0});
    out.planes.push_back({Vec3(-hw, len / 2 - 10, hh), Vec3(1, 0, 0),
                          Vec3(0, 1, 0), Vec3(0, 0, 1), len / 2, hh, 12.0});
    out.planes.push_back({Vec3(0, len / 2 - 10, 0), Vec3(0, 0, 1),
                          Vec3(1, 0, 0), Vec3(0, 1, 0), hw, len / 2, 8.0});
    out.planes.push_back({Vec3(0, len / 2 - 10, spec.tunnel_height),
                          Vec3(0, 0, -1), Vec3(1, 0, 0), Vec3(0, 1, 0), hw,
                          len / 2, 8.0});
    // Repetitive features: identical scatterer pairs at regular spacing.
    for (double y = -10.0; y < len - 10.0; y += spec.tunnel_feature_spacing) {
      out.scatterers.push_back({Vec3(hw - 0.05, y, 2.2), 22.0});
      out.scatterers.push_back({Vec3(-hw + 0.05, y, 2.2), 22.0});
    }
  } else {
    detail::add_box_room(out.planes, spec.room_half, 6.0, 12.0);
    for (int i = 0; i < spec.scatterer_count; ++i) {
      const double ang = 2.0 * M_PI * uni(gen);
      const double rad = spec.room_half * (0.3 + 0.65 * uni(gen));
      out.scatterers.push_back({Vec3(rad * std::cos(ang), rad * std::sin(ang),
                                     0.3 + 3.0 * uni(gen)),
                                14.0 + 12.0 * uni(gen)});
    }
  }
  for (int i = 0; i < spec.dynamic_objects; ++i) {
    Scatterer s;
    s.position = Vec3(8.0 * (uni(gen) - 0.5), 8.0 * (uni(gen) - 0.5), 1.0);
    s.velocity = Vec3(2.0 + 2.0 * uni(gen), 2.0 * (uni(gen) - 0.5), 0.0);
    s.rcs = 18.0;
    out.scatterers.push_back(s);
  }
  if (out.planes.empty() && out.scatterers.empty()) {
    throw ScenarioError("no landmarks");
  }

  // --- Radar stream ------------------------------------------------------
  const double frame_period = 1.0 / spec.radar_rate;
  const int n_frames = static_cast<int>(spec.duration * spec.radar_rate);
  const double fov_az = spec.fov_azimuth_deg * M_PI / 180.0;
  const double fov_el = spec.fov_elevation_deg * M_PI / 180.0;
  const double sa = spec.sigma_azimuth_deg * M_PI / 180.0;
  const double se = spec.sigma_elevation_deg * M_PI / 180.0;

  for (int f = 0; f < n_frames; ++f) {
    RadarScan scan;
    scan.id = f;
    scan.stamp = f * frame_period;
    const int n_ret = spec.returns_per_frame;
    int attempts = 0;
    while (static_cast<int>(scan.points.size()) < n_ret &&
           attempts < 60 * n_ret) {
      ++attempts;
      const double tp =
          scan.stamp + 0.85 * frame_period *
                           (static_cast<double>(scan.points.size()) / n_ret);
      const Vec3 pos = gt.position(tp);
      const Mat3 rot = gt.orientation(tp).to_rotation_matrix();

      // Pick a target: scatterers and plane patches share the budget.
      Vec3 target;
      double rcs;
      Vec3 target_vel = Vec3::Zero();
      const bool pick_scatter =
          !out.scatterers.empty() &&
          (out.planes.empty() || uni(gen) < 0.25);
      if (pick_scatter) {
        const auto& s = out.scatterers[static_cast<size_t>(uni(gen) *
                                                           out.scatterers.size()) %
                                       out.scatterers.size()];
        const double travel = s.velocity.norm() > 0 ? tp : 0.0;
        target = s.position + travel * s.velocity;
        target_vel = s.velocity;
        rcs = s.rcs + 0.8 * nrm(gen);
      } else {
        const auto& pl =
            out.planes[static_cast<size_t>(uni(gen) * out.planes.size()) %
                       out.planes.size()];
        target = pl.center + (2.0 * uni(gen) - 1.0) * pl.half_u * pl.u_axis +
                 (2.0 * uni(gen) - 1.0) * pl.half_v * pl.v_axis;
        rcs = pl.rcs + 1.2 * nrm(gen);
      }

      const Vec3 rel = rot.transpose() * (target - pos);  // radar == body here
      SphericalCoord sc;
      try {
        sc = cartesian_to_spherical(rel);
      } catch (const std::invalid_argument&) {
        continue;
      }
      if (sc.range < spec.min_range || sc.range > spec.max_range) continue;
      if (std::abs(sc.azimuth) > fov_az || std::abs(sc.elevation) > fov_el)
        continue;

      // Range rate of the sensor-target pair (world frame).
      const Vec3 dir_world = (target - pos).normalized();
      const Vec3 sensor_vel = gt.velocity(tp);
      double doppler = dir_world.dot(target_vel - sensor_vel);

      RadarPoint pt;
      pt.time = tp;
      sc.range += spec.sigma_range * nrm(gen);
      sc.azimuth += sa * nrm(gen);
      sc.elevation += se * nrm(gen);
      if (sc.range <= 0.05) continue;
      if (spec.outlier_fraction > 0.0 && uni(gen) < spec.outlier_fraction) {
        sc.range *= 1.5 + 1.0 * uni(gen);  // multipath-like ghost
        if (sc.range > spec.max_range) sc.range = spec.max_range - 0.1;
      }
      pt.coord = sc;
      pt.doppler = doppler + spec.sigma_doppler * nrm(gen);
      pt.rcs = rcs;
      scan.points.push_back(pt);
    }
    if (scan.points.empty()) {
      throw ScenarioError("no landmarks in sensor FOV at frame " +
                          std::to_string(f));
    }
    out.radar.push_back(std::move(scan));
  }

  // --- IMU stream ----------------------------------------------------------
  const Vec3 world_gravity(0, 0, -spec.gravity_magnitude);
  Vec3 bg = spec.initial_gyro_bias;
  Vec3 ba = spec.initial_accel_bias;
  const int n_imu = static_cast<int>(spec.duration * spec.imu_rate);
  for (int i = 0; i < n_imu; ++i) {
    const double t = i / spec.imu_rate;
    ImuSample s;
    s.time = t;
    const Mat3 rot = gt.orientation(t).to_rotation_matrix();
    s.gyro = gt.angular_velocity(t) + bg +
             spec.sigma_gyro * Vec3(nrm(gen), nrm(gen), nrm(gen));
    s.accel = rot.transpose() * (gt.acceleration(t) - world_gravity) + ba +
              spec.sigma_accel * Vec3(nrm(gen), nrm(gen), nrm(gen));
    bg += spec.gyro_bias_walk * Vec3(nrm(gen), nrm(gen), nrm(gen));
    ba += spec.accel_bias_walk * Vec3(nrm(gen), nrm(gen), nrm(gen));
    out.imu.push_back(s);
  }

  // --- Ground-truth trajectory samples -------------------------------------
  for (int f = 0; f < n_frames; ++f) {
    const double t = f * frame_period;
    if (t < gt.min_time() + gt.dt) continue;
    TrajectorySample ts;
    ts.t = t;
    ts.position = gt.position(t);
    ts.orientation = gt.orientation(t);
    out.gt_trajectory.samples.push_back(ts);
  }
  return out;
}

}  // namespace rio
