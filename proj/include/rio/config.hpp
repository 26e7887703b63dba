#pragma once

// Pipeline configuration: every threshold and noise parameter of the
// system, each with its documented default, plus JSON load/save with
// field-precise validation.

#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "rio/geometry.hpp"
#include "rio/uncertainty.hpp"

namespace rio {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  // Spline and filter
  double dt = 0.1;          // s, knot spacing
  double epsilon = 1e-4;    // IEKF convergence threshold on |dx|
  int max_iters = 10;

  // Process noise (per knot) and initial covariance
  double sigma_process_translation = 0.05;  // m
  double sigma_process_increment = 0.01;    // rad
  double sigma_process_accel_bias = 1e-3;
  double sigma_process_gyro_bias = 1e-4;
  double p0_translation = 1e-4;
  double p0_increment = 1e-4;
  double p0_accel_bias = 1e-2;
  double p0_gyro_bias = 1e-4;

  // Localizability
  double eta = 0.8;
  int n_min = 30;
  bool constrained_update = true;

  // Uncertainty thresholds and sensor noise
  double tau_u = 0.5;    // m^2, mapping / plane-weight bound
  double tau_pl = 0.05;  // m^2, plane covariance gate
  double plane_rms_bound = 0.2;  // m
  double sigma_range = 0.1;          // m
  double sigma_azimuth_deg = 1.0;    // deg
  double sigma_elevation_deg = 1.0;  // deg
  double sigma_doppler = 0.1;        // m/s
  double sigma_gyro = 0.01;          // rad/s
  double sigma_gravity = 0.05;       // unitless residual scale
  double gravity_magnitude = 9.81;   // m/s^2
  double gravity_min = 1.0;          // m/s^2, skip gate for the residual
  // full: pose + measurement; measurement_only: no pose propagation;
  // none: fixed isotropic covariances everywhere.
  std::string uncertainty_mode = "full";

  // RCS weighting
  double rcs_floor = 0.5;       // dBsm
  double rcs_weight_max = 2.0;

  // Radar preprocessing
  int ransac_iterations = 100;
  double ransac_inlier_threshold = 0.25;  // m/s
  int ransac_min_fit_points = 5;
  int ransac_min_inliers = 10;
  uint32_t ransac_seed = 7;
  double ego_jump = 2.0;      // m/s per frame
  double dynamic_gate = 0.5;  // m/s
  double min_range = 0.5;     // m

  // Mapping
  double r_replace = 0.2;    // m
  double map_window = 200.0; // m, sliding spatial window

  // Extrinsics (body from radar) and the Doppler sign convention:
  // z = doppler_sign * measured, matching h = d^T v_body. With range-rate
  // measurements (approaching targets negative) the sign is -1.
  std::array<double, 4> extrinsic_rotation_wxyz{1.0, 0.0, 0.0, 0.0};
  std::array<double, 3> extrinsic_translation{0.0, 0.0, 0.0};
  double doppler_sign = -1.0;

  // Bootstrap
  double bootstrap_duration = 0.5;  // s of assumed-static IMU

  Extrinsics extrinsics() const {
    Extrinsics ext;
    const auto& q = extrinsic_rotation_wxyz;
    ext.rotation =
        UnitQuaternion(q[0], q[1], q[2], q[3]).normalized().to_rotation_matrix();
    ext.translation =
        Vec3(extrinsic_translation[0], extrinsic_translation[1],
             extrinsic_translation[2]);
    return ext;
  }

  Vec3 world_gravity() const { return Vec3(0, 0, -gravity_magnitude); }
  double sigma_azimuth() const { return sigma_azimuth_deg * M_PI / 180.0; }
  double sigma_elevation() const { return sigma_elevation_deg * M_PI / 180.0; }

  void validate() const {
    const auto positive = [](double v, const char* field) {
      if (!(v > 0.0)) {
        throw ConfigError(std::string(field) + ": must be > 0, got " +
                          std::to_string(v));
      }
    };
    positive(dt, "dt");
    positive(epsilon, "epsilon");
    if (max_iters < 1) throw ConfigError("max_iters: must be >= 1");
    positive(tau_u, "tau_u");
    positive(tau_pl, "tau_pl");
    positive(sigma_range, "sigma_range");
    positive(sigma_azimuth_deg, "sigma_azimuth_deg");
    positive(sigma_elevation_deg, "sigma_elevation_deg");
    positive(sigma_doppler, "sigma_doppler");
    positive(sigma_gyro, "sigma_gyro");
    positive(sigma_gravity, "sigma_gravity");
    positive(gravity_magnitude, "gravity_magnitude");
    if (!(eta > 0.0 && eta < 1.0)) {
      throw ConfigError("eta: must be in (0,1), got " + std::to_string(eta));
    }
    if (n_min < 1) throw ConfigError("n_min: must be >= 1");
    if (ransac_iterations < 1) throw ConfigError("ransac_iterations: must be >= 1");
    positive(ransac_inlier_threshold, "ransac_inlier_threshold");
    if (ransac_min_fit_points < 3) {
      throw ConfigError("ransac_min_fit_points: must be >= 3");
    }
    if (ransac_min_inliers < 3) throw ConfigError("ransac_min_inliers: must be >= 3");
    positive(r_replace, "r_replace");
    positive(map_window, "map_window");
    positive(bootstrap_duration, "bootstrap_duration");
    if (uncertainty_mode != "full" && uncertainty_mode != "measurement_only" &&
        uncertainty_mode != "none") {
      throw ConfigError(
          "uncertainty_mode: must be full|measurement_only|none, got " +
          uncertainty_mode);
    }
    if (doppler_sign != 1.0 && doppler_sign != -1.0) {
      throw ConfigError("doppler_sign: must be +1 or -1");
    }
    const double qn =
        std::sqrt(extrinsic_rotation_wxyz[0] * extrinsic_rotation_wxyz[0] +
                  extrinsic_rotation_wxyz[1] * extrinsic_rotation_wxyz[1] +
                  extrinsic_rotation_wxyz[2] * extrinsic_rotation_wxyz[2] +
                  extrinsic_rotation_wxyz[3] * extrinsic_rotation_wxyz[3]);
    if (std::abs(qn - 1.0) > 1e-3) {
      throw ConfigError("extrinsic_rotation_wxyz: must be a unit quaternion");
    }
  }
};

namespace detail {
template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}
}  // namespace detail

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["dt"] = c.dt;
  j["epsilon"] = c.epsilon;
  j["max_iters"] = c.max_iters;
  j["sigma_process_translation"] = c.sigma_process_translation;
  j["sigma_process_increment"] = c.sigma_process_increment;
  j["sigma_process_accel_bias"] = c.sigma_process_accel_bias;
  j["sigma_process_gyro_bias"] = c.sigma_process_gyro_bias;
  j["p0_translation"] = c.p0_translation;
  j["p0_increment"] = c.p0_increment;
  j["p0_accel_bias"] = c.p0_accel_bias;
  j["p0_gyro_bias"] = c.p0_gyro_bias;
  j["eta"] = c.eta;
  j["n_min"] = c.n_min;
  j["constrained_update"] = c.constrained_update;
  j["tau_u"] = c.tau_u;
  j["tau_pl"] = c.tau_pl;
  j["plane_rms_bound"] = c.plane_rms_bound;
  j["sigma_range"] = c.sigma_range;
  j["sigma_azimuth_deg"] = c.sigma_azimuth_deg;
  j["sigma_elevation_deg"] = c.sigma_elevation_deg;
  j["sigma_doppler"] = c.sigma_doppler;
  j["sigma_gyro"] = c.sigma_gyro;
  j["sigma_gravity"] = c.sigma_gravity;
  j["gravity_magnitude"] = c.gravity_magnitude;
  j["gravity_min"] = c.gravity_min;
  j["uncertainty_mode"] = c.uncertainty_mode;
  j["rcs_floor"] = c.rcs_floor;
  j["rcs_weight_max"] = c.rcs_weight_max;
  j["ransac_iterations"] = c.ransac_iterations;
  j["ransac_inlier_threshold"] = c.ransac_inlier_threshold;
  j["ransac_min_fit_points"] = c.ransac_min_fit_points;
  j["ransac_min_inliers"] = c.ransac_min_inliers;
  j["ransac_seed"] = c.ransac_seed;
  j["ego_jump"] = c.ego_jump;
  j["dynamic_gate"] = c.dynamic_gate;
  j["min_range"] = c.min_range;
  j["r_replace"] = c.r_replace;
  j["map_window"] = c.map_window;
  j["extrinsic_rotation_wxyz"] = c.extrinsic_rotation_wxyz;
  j["extrinsic_translation"] = c.extrinsic_translation;
  j["doppler_sign"] = c.doppler_sign;
  j["bootstrap_duration"] = c.bootstrap_duration;
  return j;
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  using detail::read_field;
  read_field(j, "dt", c.dt);
  read_field(j, "epsilon", c.epsilon);
  read_field(j, "max_iters", c.max_iters);
  read_field(j, "sigma_process_translation", c.sigma_process_translation);
  read_field(j, "sigma_process_increment", c.sigma_process_increment);
  read_field(j, "sigma_process_accel_bias", c.sigma_process_accel_bias);
  read_field(j, "sigma_process_gyro_bias", c.sigma_process_gyro_bias);
  read_field(j, "p0_translation", c.p0_translation);
  read_field(j, "p0_increment", c.p0_increment);
  read_field(j, "p0_accel_bias", c.p0_accel_bias);
  read_field(j, "p0_gyro_bias", c.p0_gyro_bias);
  read_field(j, "eta", c.eta);
  read_field(j, "n_min", c.n_min);
  read_field(j, "constrained_update", c.constrained_update);
  read_field(j, "tau_u", c.tau_u);
  read_field(j, "tau_pl", c.tau_pl);
  read_field(j, "plane_rms_bound", c.plane_rms_bound);
  read_field(j, "sigma_range", c.sigma_range);
  read_field(j, "sigma_azimuth_deg", c.sigma_azimuth_deg);
  read_field(j, "sigma_elevation_deg", c.sigma_elevation_deg);
  read_field(j, "sigma_doppler", c.sigma_doppler);
  read_field(j, "sigma_gyro", c.sigma_gyro);
  read_field(j, "sigma_gravity", c.sigma_gravity);
  read_field(j, "gravity_magnitude", c.gravity_magnitude);
  read_field(j, "gravity_min", c.gravity_min);
  read_field(j, "uncertainty_mode", c.uncertainty_mode);
  read_field(j, "rcs_floor", c.rcs_floor);
  read_field(j, "rcs_weight_max", c.rcs_weight_max);
  read_field(j, "ransac_iterations", c.ransac_iterations);
  read_field(j, "ransac_inlier_threshold", c.ransac_inlier_threshold);
  read_field(j, "ransac_min_fit_points", c.ransac_min_fit_points);
  read_field(j, "ransac_min_inliers", c.ransac_min_inliers);
  read_field(j, "ransac_seed", c.ransac_seed);
  read_field(j, "ego_jump", c.ego_jump);
  read_field(j, "dynamic_gate", c.dynamic_gate);
  read_field(j, "min_range", c.min_range);
  read_field(j, "r_replace", c.r_replace);
  read_field(j, "map_window", c.map_window);
  read_field(j, "extrinsic_rotation_wxyz", c.extrinsic_rotation_wxyz);
  read_field(j, "extrinsic_translation", c.extrinsic_translation);
  read_field(j, "doppler_sign", c.doppler_sign);
  read_field(j, "bootstrap_duration", c.bootstrap_duration);
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace rio
