#pragma once

// Flat-text dataset formats.
//
// Radar: one file per sequence, comma-separated rows
//   scan_id, point_time_s, range_m, azimuth_rad, elevation_rad,
//   doppler_mps, rcs_dbsm
// IMU: time_s, wx, wy, wz, ax, ay, az   (rad/s, m/s^2)
// Trajectory: "timestamp tx ty tz qx qy qz qw", space separated.
// Map: "x y z trace rcs" plus an optional binary little-endian PLY.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rio/evaluate.hpp"
#include "rio/map_point.hpp"
#include "rio/radar_preprocess.hpp"

namespace rio {

struct ParseError : std::runtime_error {
  ParseError(const std::string& path, int line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
        line_number(line) {}
  int line_number;
};

struct ImuSample {
  double time = 0.0;
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2
};

namespace detail {

inline std::vector<double> parse_row(const std::string& text, size_t expected,
                                     const std::string& path, int line) {
  std::vector<double> out;
  out.reserve(expected);
  std::string cell;
  std::stringstream ss(text);
  while (std::getline(ss, cell, ',')) {
    try {
      size_t pos = 0;
      const double v = std::stod(cell, &pos);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ParseError(path, line, "malformed number '" + cell + "'");
    }
  }
  if (out.size() != expected) {
    throw ParseError(path, line,
                     "expected " + std::to_string(expected) + " fields, got " +
                         std::to_string(out.size()));
  }
  return out;
}

inline void format_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  out += buf;
}

}  // namespace detail

inline void write_radar_file(const std::string& path,
                             const std::vector<RadarScan>& scans) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  std::string line;
  for (const auto& scan : scans) {
    for (const auto& p : scan.points) {
      line.clear();
      line += std::to_string(scan.id);
      line += ',';
      detail::format_double(line, p.time);
      line += ',';
      detail::format_double(line, p.coord.range);
      line += ',';
      detail::format_double(line, p.coord.azimuth);
      line += ',';
      detail::format_double(line, p.coord.elevation);
      line += ',';
      detail::format_double(line, p.doppler);
      line += ',';
      detail::format_double(line, p.rcs);
      line += '\n';
      out << line;
    }
  }
}

inline std::vector<RadarScan> read_radar_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<RadarScan> scans;
  std::string text;
  int line = 0;
  double last_time = -std::numeric_limits<double>::infinity();
  while (std::getline(in, text)) {
    ++line;
    if (text.empty() || text[0] == '#') continue;
    const auto row = detail::parse_row(text, 7, path, line);
    const long id = static_cast<long>(row[0]);
    RadarPoint p;
    p.time = row[1];
    p.coord = {row[2], row[3], row[4]};
    p.doppler = row[5];
    p.rcs = row[6];
    if (p.coord.range <= 0.0) {
      throw ParseError(path, line, "range must be positive");
    }
    if (scans.empty() || scans.back().id != id) {
      if (p.time < last_time) {
        throw ParseError(path, line, "non-monotone scan timestamps");
      }
      RadarScan s;
      s.id = id;
      s.stamp = p.time;
      scans.push_back(s);
    }
    last_time = std::max(last_time, p.time);
    scans.back().points.push_back(p);
  }
  return scans;
}

inline void write_imu_file(const std::string& path,
                           const std::vector<ImuSample>& samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  std::string line;
  for (const auto& s : samples) {
    line.clear();
    detail::format_double(line, s.time);
    for (int i = 0; i < 3; ++i) {
      line += ',';
      detail::format_double(line, s.gyro[i]);
    }
    for (int i = 0; i < 3; ++i) {
      line += ',';
      detail::format_double(line, s.accel[i]);
    }
    line += '\n';
    out << line;
  }
}

inline std::vector<ImuSample> read_imu_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<ImuSample> samples;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty() || text[0] == '#') continue;
    const auto row = detail::parse_row(text, 7, path, line);
    ImuSample s;
    s.time = row[0];
    s.gyro = Vec3(row[1], row[2], row[3]);
    s.accel = Vec3(row[4], row[5], row[6]);
    if (!samples.empty() && s.time < samples.back().time) {
      throw ParseError(path, line, "non-monotone IMU timestamps");
    }
    samples.push_back(s);
  }
  return samples;
}

inline void write_trajectory_file(const std::string& path,
                                  const TrajectoryEstimate& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  std::string line;
  for (const auto& s : traj.samples) {
    line.clear();
    detail::format_double(line, s.t);
    for (int i = 0; i < 3; ++i) {
      line += ' ';
      detail::format_double(line, s.position[i]);
    }
    // File order is qx qy qz qw.
    const auto& q = s.orientation;
    for (double v : {q.x(), q.y(), q.z(), q.w()}) {
      line += ' ';
      detail::format_double(line, v);
    }
    line += '\n';
    out << line;
  }
}

inline TrajectoryEstimate read_trajectory_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  TrajectoryEstimate traj;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty() || text[0] == '#') continue;
    std::stringstream ss(text);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (row.size() != 8) {
      throw ParseError(path, line, "expected 8 fields, got " +
                                       std::to_string(row.size()));
    }
    TrajectorySample s;
    s.t = row[0];
    s.position = Vec3(row[1], row[2], row[3]);
    s.orientation = UnitQuaternion(row[7], row[4], row[5], row[6]).normalized();
    if (!traj.samples.empty() && s.t <= traj.samples.back().t) {
      throw ParseError(path, line, "non-increasing trajectory timestamps");
    }
    traj.samples.push_back(s);
  }
  return traj;
}

inline void write_map_file(const std::string& path,
                           const std::vector<MapPoint>& points) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  std::string line;
  for (const auto& p : points) {
    line.clear();
    detail::format_double(line, p.position.x());
    line += ' ';
    detail::format_double(line, p.position.y());
    line += ' ';
    detail::format_double(line, p.position.z());
    line += ' ';
    detail::format_double(line, p.trace);
    line += ' ';
    detail::format_double(line, p.rcs);
    line += '\n';
    out << line;
  }
}

// Binary little-endian PLY point cloud with per-point trace and RCS.
inline void write_map_ply(const std::string& path,
                          const std::vector<MapPoint>& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << points.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "property double trace\nproperty double rcs\n"
      << "end_header\n";
  for (const auto& p : points) {
    const double row[5] = {p.position.x(), p.position.y(), p.position.z(),
                           p.trace, p.rcs};
    out.write(reinterpret_cast<const char*>(row), sizeof(row));
  }
}

}  // namespace rio
