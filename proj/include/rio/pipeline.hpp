#pragma once

// The odometry loop: per knot, predict, gather in-window measurements,
// preprocess radar, assemble residual blocks against a map snapshot, run
// the localizability-constrained iterated update, then propagate point
// uncertainties and insert the scan into the submap.

#include <chrono>
#include <deque>
#include <ostream>

#include <json.hpp>

#include "rio/config.hpp"
#include "rio/evaluate.hpp"
#include "rio/io.hpp"
#include "rio/localizability.hpp"
#include "rio/radar_preprocess.hpp"
#include "rio/residuals.hpp"
#include "rio/scenario.hpp"
#include "rio/state.hpp"
#include "rio/submap.hpp"
#include "rio/uncertainty.hpp"

namespace rio {

enum class RunStatus { ok, divergence, stream_gap, insufficient_input };

struct RunResult {
  RunStatus status = RunStatus::ok;
  std::string message;
  TrajectoryEstimate trajectory;
  std::vector<MapPoint> map;
  long knots = 0;
  long total_iterations = 0;
  long objective_increases = 0;
  double wall_seconds = 0.0;
  nlohmann::json checkpoint;  // filled when a stream gap aborts the run
};

namespace detail {

struct MeasPoint {
  double time;
  SphericalCoord coord;
  Vec3 cart_radar;   // Cartesian in the radar frame
  double doppler_z;  // sign-adjusted measurement for the Doppler model
  double rcs;
};

struct KnotCovariances {
  std::array<Mat3, 4> translation;
  std::array<Mat3, 4> increments;
  Mat3 lagged;
};

inline KnotCovariances marginal_covariances(const FilterState& s) {
  KnotCovariances kc;
  for (int k = 0; k < 4; ++k) {
    kc.translation[k] = s.P.block<3, 3>(kPosOffset + 3 * k, kPosOffset + 3 * k);
    kc.increments[k] = s.P.block<3, 3>(kOriOffset + 3 * k, kOriOffset + 3 * k);
  }
  kc.lagged = s.lagged_cov;
  return kc;
}

// World-frame covariance of one return under the configured mode, reusing
// the pose evaluation already computed for the residuals.
inline WorldPointCovariance point_world_cov(const PipelineConfig& cfg,
                                            const PoseEval& pe,
                                            const KnotCovariances& kc,
                                            const SplineWindow& w,
                                            const Extrinsics& ext,
                                            const SphericalCoord& sc,
                                            const Vec3& point_body) {
  if (cfg.uncertainty_mode == "none") {
    WorldPointCovariance wc;
    wc.sigma = cfg.sigma_range * cfg.sigma_range * Mat3::Identity();
    wc.trace = wc.sigma.trace();
    return wc;
  }
  const Mat3 sigma_rp = measurement_covariance(
      sc, cfg.sigma_range, cfg.sigma_azimuth(), cfg.sigma_elevation());
  PoseCovariance pc;  // zero when pose uncertainty is disabled
  if (cfg.uncertainty_mode == "full") {
    Mat3 sigma_t = Mat3::Zero();
    Mat4 sigma_q = Mat4::Zero();
    for (int k = 0; k < 4; ++k) {
      sigma_t += pe.basis.m[k] * pe.basis.m[k] * kc.translation[k];
      sigma_q += pe.ori.dq_ddelta[k] * kc.increments[k] *
                 pe.ori.dq_ddelta[k].transpose();
    }
    const Eigen::Matrix<double, 4, 3> lift =
        pe.ori.dq_dlagged * quat_tangent_lift(w.lagged_orientation);
    sigma_q += lift * kc.lagged * lift.transpose();
    pc.translation = sigma_t;
    pc.quaternion = sigma_q;
    pc.rotation = quat_cov_to_rotvec_cov(pe.ori.q, sigma_q);
  }
  return world_point_covariance(pc, pe.R, ext, point_body, sigma_rp);
}

}  // namespace detail

inline RunResult run_odometry(const PipelineConfig& config,
                              const std::vector<RadarScan>& radar_in,
                              const std::vector<ImuSample>& imu,
                              std::ostream* diagnostics = nullptr) {
  const auto t_start = std::chrono::steady_clock::now();
  RunResult result;
  config.validate();

  if (imu.size() < 10) {
    result.status = RunStatus::insufficient_input;
    result.message = "need at least 10 IMU samples";
    return result;
  }

  const Extrinsics ext = config.extrinsics();
  const Vec3 world_gravity = config.world_gravity();

  // --- Bootstrap: static interval estimates gravity direction and gyro bias.
  const double t0 = imu.front().time;
  const double t_anchor = t0 + config.bootstrap_duration;
  Vec3 gyro_mean = Vec3::Zero(), accel_mean = Vec3::Zero();
  int boot_count = 0;
  for (const auto& s : imu) {
    if (s.time >= t_anchor) break;
    gyro_mean += s.gyro;
    accel_mean += s.accel;
    ++boot_count;
  }
  if (boot_count < 5) {
    result.status = RunStatus::insufficient_input;
    result.message = "bootstrap interval has fewer than 5 IMU samples";
    return result;
  }
  gyro_mean /= boot_count;
  accel_mean /= boot_count;

  UnitQuaternion q0;
  {
    const Vec3 up = accel_mean.normalized();
    const Vec3 axis = up.cross(Vec3(0, 0, 1));
    const double angle = std::atan2(axis.norm(), up.z());
    q0 = axis.norm() > 1e-12 ? quat_exp(angle * axis.normalized())
                             : UnitQuaternion::identity();
  }

  FilterState state;
  state.dt = config.dt;
  state.newest_knot_time = t_anchor;
  state.lagged_orientation = q0;
  state.lagged_cov = config.p0_increment * Mat3::Identity();
  state.x.segment<3>(kBgOffset) = gyro_mean;
  for (int k = 0; k < 4; ++k) {
    state.P.block<3, 3>(kPosOffset + 3 * k, kPosOffset + 3 * k) =
        config.p0_translation * Mat3::Identity();
    state.P.block<3, 3>(kOriOffset + 3 * k, kOriOffset + 3 * k) =
        config.p0_increment * Mat3::Identity();
  }
  state.P.block<3, 3>(kBaOffset, kBaOffset) =
      config.p0_accel_bias * Mat3::Identity();
  state.P.block<3, 3>(kBgOffset, kBgOffset) =
      config.p0_gyro_bias * Mat3::Identity();

  ProcessNoise pn;
  pn.sigma_translation = config.sigma_process_translation;
  pn.sigma_increment = config.sigma_process_increment;
  pn.sigma_accel_bias = config.sigma_process_accel_bias;
  pn.sigma_gyro_bias = config.sigma_process_gyro_bias;
  const ProcessModel model = make_process_model(pn);

  // --- Preprocess radar sequentially (ego velocity, dynamic removal).
  EgoEstimationParams ego_params;
  ego_params.ransac_iterations = config.ransac_iterations;
  ego_params.inlier_threshold = config.ransac_inlier_threshold;
  ego_params.min_fit_points = config.ransac_min_fit_points;
  ego_params.min_inliers = config.ransac_min_inliers;
  ego_params.seed = config.ransac_seed;

  std::vector<detail::MeasPoint> points;
  {
    EgoVelocity prev_ego;
    for (const auto& raw : radar_in) {
      RadarScan scan;
      scan.id = raw.id;
      scan.stamp = raw.stamp;
      for (const auto& p : raw.points) {
        if (p.coord.range >= config.min_range) scan.points.push_back(p);
      }
      const EgoVelocity ego =
          stabilize_ego(estimate_ego_velocity(scan, ego_params), prev_ego,
                        config.ego_jump);
      const RadarScan filtered = filter_dynamic(scan, ego, config.dynamic_gate);
      if (ego.valid) prev_ego = ego;
      for (const auto& p : filtered.points) {
        detail::MeasPoint mp;
        mp.time = p.time;
        mp.coord = p.coord;
        mp.cart_radar = spherical_to_cartesian(p.coord);
        mp.doppler_z = config.doppler_sign * p.doppler;
        mp.rcs = p.rcs;
        points.push_back(mp);
      }
    }
    std::stable_sort(points.begin(), points.end(),
                     [](const auto& a, const auto& b) { return a.time < b.time; });
  }
  std::vector<double> frame_stamps;
  for (const auto& s : radar_in) frame_stamps.push_back(s.stamp);

  const double t_end = std::max(points.empty() ? t_anchor : points.back().time,
                                imu.back().time);

  SpatialIndex map;
  PlaneFitParams plane_params;
  plane_params.tau_u = config.tau_u;
  plane_params.tau_pl = config.tau_pl;
  plane_params.rms_bound = config.plane_rms_bound;
  RcsWeightParams rcs_params;
  rcs_params.floor = config.rcs_floor;
  rcs_params.max = config.rcs_weight_max;

  size_t point_cursor = 0;
  size_t imu_cursor = 0;
  while (imu_cursor < imu.size() && imu[imu_cursor].time < t_anchor) {
    ++imu_cursor;
  }
  int gap_knots = 0;
  long map_stamp_base = 0;

  while (state.newest_knot_time < t_end) {
    state = predict(state, model);
    const double win_begin = state.newest_knot_time - state.dt;
    const double win_end = state.newest_knot_time;

    std::vector<detail::MeasPoint> win_points;
    while (point_cursor < points.size() &&
           points[point_cursor].time < win_end) {
      if (points[point_cursor].time >= win_begin) {
        win_points.push_back(points[point_cursor]);
      }
      ++point_cursor;
    }
    std::vector<ImuSample> win_imu;
    while (imu_cursor < imu.size() && imu[imu_cursor].time < win_end) {
      if (imu[imu_cursor].time >= win_begin) {
        win_imu.push_back(imu[imu_cursor]);
      }
      ++imu_cursor;
    }

    if (win_points.empty() && win_imu.empty()) {
      ++gap_knots;
      if (gap_knots > 5) {
        result.status = RunStatus::stream_gap;
        result.message = "stream gap longer than 5 knots at t=" +
                         std::to_string(win_begin);
        nlohmann::json ck;
        ck["newest_knot_time"] = state.newest_knot_time;
        ck["knot_index"] = state.knot_index;
        ck["dt"] = state.dt;
        ck["x"] = std::vector<double>(state.x.data(), state.x.data() + kStateDim);
        ck["P"] = std::vector<double>(state.P.data(),
                                      state.P.data() + kStateDim * kStateDim);
        ck["lagged_wxyz"] = {state.lagged_orientation.w(),
                             state.lagged_orientation.x(),
                             state.lagged_orientation.y(),
                             state.lagged_orientation.z()};
        ck["lagged_cov"] = std::vector<double>(state.lagged_cov.data(),
                                               state.lagged_cov.data() + 9);
        result.checkpoint = ck;
        break;
      }
      ++result.knots;
      continue;
    }
    gap_knots = 0;

    const SpatialIndex snapshot = map.snapshot();
    const detail::KnotCovariances prior_cov = detail::marginal_covariances(state);
    const FilterState prior = state;

    // One assembly pass: classify correspondences, then emit blocks. The
    // result is cached on the evaluation point so the constraint pre-pass
    // and the first filter iteration share the work.
    int n_plane = 0, n_dist = 0;
    std::vector<SurfacePoint> plane_corrs;
    StateVec cached_x = StateVec::Constant(std::numeric_limits<double>::quiet_NaN());
    std::vector<ResidualBlock> cached_blocks;

    const auto assemble = [&](const StateVec& x) -> std::vector<ResidualBlock> {
      if (x == cached_x) return cached_blocks;
      FilterState sx = prior;
      sx.x = x;
      const SplineWindow w = state_to_window(sx);
      const Vec3 ba = x.segment<3>(kBaOffset);
      const Vec3 bg = x.segment<3>(kBgOffset);

      struct Classified {
        PoseEval pe;
        Mat3 world_cov;
        bool has_plane = false;
        PlaneFit plane;
        bool has_dist = false;
        RcsDistribution dist;
      };
      std::vector<Classified> cls(win_points.size());

      n_plane = n_dist = 0;
      plane_corrs.clear();
      for (size_t i = 0; i < win_points.size(); ++i) {
        const auto& mp = win_points[i];
        Classified& c = cls[i];
        c.pe = eval_pose(w, mp.time);
        const Vec3 point_body = ext.transform(mp.cart_radar);
        c.world_cov = detail::point_world_cov(config, c.pe, prior_cov, w, ext,
                                              mp.coord, point_body)
                          .sigma;
        if (snapshot.size() >= 5) {
          const auto nn = snapshot.knn(c.pe.position + c.pe.R * point_body, 5);
          if (!nn.short_count) {
            const PlaneFit fit = fit_plane(nn.points, plane_params);
            if (fit.reliable) {
              c.has_plane = true;
              c.plane = fit;
              ++n_plane;
              const Vec3 world = c.pe.position + c.pe.R * point_body;
              const Vec3 origin = c.pe.position + c.pe.R * ext.translation;
              plane_corrs.push_back({world - origin, fit.normal});
            } else {
              c.has_dist = true;
              c.dist = rcs_distribution(nn.points);
              ++n_dist;
            }
          }
        }
      }
      const EnvWeights env = env_weights(n_plane, n_dist);

      std::vector<ResidualBlock> blocks;
      blocks.reserve(win_points.size() * 2 + win_imu.size() * 2);
      for (size_t i = 0; i < win_points.size(); ++i) {
        const auto& mp = win_points[i];
        const Classified& c = cls[i];
        if (c.has_plane) {
          blocks.push_back(plane_residual(c.pe, mp.cart_radar, c.plane, ext,
                                          env.plane, c.world_cov));
        } else if (c.has_dist) {
          auto b = distribution_residual(c.pe, mp.cart_radar, mp.rcs, c.dist,
                                         ext, env.distribution, c.world_cov,
                                         rcs_params);
          if (b) blocks.push_back(std::move(*b));
        }
        blocks.push_back(doppler_residual(c.pe, mp.cart_radar.normalized(),
                                          mp.doppler_z, ext,
                                          config.sigma_doppler));
      }
      for (const auto& s : win_imu) {
        const PoseEval pe = eval_pose(w, s.time);
        blocks.push_back(gyro_residual(pe, s.gyro, bg, config.sigma_gyro));
        auto g = gravity_residual(pe, s.accel, ba, world_gravity,
                                  config.sigma_gravity, config.gravity_min);
        if (g) blocks.push_back(std::move(*g));
      }
      cached_x = x;
      cached_blocks = blocks;
      return blocks;
    };

    // Constraint pre-pass at the prior (shared with iteration 0 via cache).
    assemble(prior.x);
    ConstraintMatrix constraints;
    std::array<int, 6> informative_counts{};
    if (config.constrained_update && !plane_corrs.empty()) {
      const LocalizabilityBasis lb = eigen_basis(accumulate(plane_corrs));
      constraints = build_constraints(lb, score_points(lb, plane_corrs),
                                      config.eta, config.n_min);
      informative_counts = constraints.informative_counts;
    }

    UpdateReport rep;
    state = iterated_update(prior, assemble, constraints, config.epsilon,
                            config.max_iters, &rep);
    result.total_iterations += rep.iterations;
    result.objective_increases += rep.objective_increases;

    if (!state.x.allFinite() || !state.P.allFinite() ||
        state.P.trace() > 1e9) {
      result.status = RunStatus::divergence;
      result.message =
          "filter divergence at t=" + std::to_string(state.newest_knot_time);
      break;
    }

    // Uncertainty-aware mapping with the posterior estimate.
    InsertReport ins;
    if (!win_points.empty()) {
      const SplineWindow w_post = state_to_window(state);
      const detail::KnotCovariances post_cov =
          detail::marginal_covariances(state);
      std::vector<MapPoint> candidates;
      candidates.reserve(win_points.size());
      for (const auto& mp : win_points) {
        const PoseEval pe = eval_pose(w_post, mp.time);
        const Vec3 point_body = ext.transform(mp.cart_radar);
        const auto wc = detail::point_world_cov(config, pe, post_cov, w_post,
                                                ext, mp.coord, point_body);
        candidates.push_back(MapPoint::make(pe.position + pe.R * point_body,
                                            wc.sigma, mp.rcs, 0));
      }
      ins = insert_with_replacement(map, candidates, config.r_replace,
                                    config.tau_u);
      map_stamp_base = map.next_stamp();
    }

    // Trajectory: the window start (a knot) plus frame stamps inside it.
    const SplineWindow w_final = state_to_window(state);
    {
      TrajectorySample ts;
      ts.t = win_begin;
      ts.position = eval_translation(w_final, win_begin);
      ts.orientation = eval_orientation(w_final, win_begin);
      result.trajectory.samples.push_back(ts);
      for (double fs : frame_stamps) {
        if (fs > win_begin + 1e-12 && fs < win_end) {
          TrajectorySample fsample;
          fsample.t = fs;
          fsample.position = eval_translation(w_final, fs);
          fsample.orientation = eval_orientation(w_final, fs);
          result.trajectory.samples.push_back(fsample);
        }
      }
    }

    if (result.knots % 50 == 49) {
      map.prune_outside(eval_translation(w_final, win_begin), config.map_window);
    }

    ++result.knots;
    if (diagnostics) {
      nlohmann::json d;
      d["knot"] = state.knot_index;
      d["t"] = state.newest_knot_time;
      d["iterations"] = rep.iterations;
      d["converged"] = rep.converged;
      d["n_plane"] = n_plane;
      d["n_dist"] = n_dist;
      d["n_doppler"] = static_cast<int>(win_points.size());
      d["n_imu"] = static_cast<int>(win_imu.size());
      d["objective_increases"] = rep.objective_increases;
      std::vector<int> constrained_axes;
      for (int i = 0; i < 6; ++i) {
        if (constraints.dimension() > 0 && constraints.under_constrained[i]) {
          constrained_axes.push_back(i);
        }
      }
      d["constrained_axes"] = constrained_axes;
      d["informative_counts"] = informative_counts;
      d["map_size"] = map.size();
      d["map_inserted"] = ins.inserted;
      d["map_replaced"] = ins.replaced;
      d["map_rejected"] = ins.rejected;
      d["map_dropped"] = ins.dropped;
      (*diagnostics) << d.dump() << "\n";
    }
  }

  (void)map_stamp_base;
  result.map = map.export_points();
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return result;
}

}  // namespace rio
