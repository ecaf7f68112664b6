#pragma once

// Frame and trajectory ingestion / output.
//
// Clouds: PLY (ascii or binary), XYZ text, or KITTI-style float32 records.
// A cloud path may be a single file or a directory; directory entries with
// the format's extension are read in lexicographic order. Frame time comes
// from a "comment timestamp <t>" PLY header line, else from a times.txt
// file next to the clouds (one time per line, same order as the clouds).
// Poses come from a TUM trajectory by nearest timestamp.

#include "losmap/ply.hpp"
#include "losmap/types.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace losmap {

enum class CloudFormat { ply, xyz, kitti_bin };

inline CloudFormat parse_cloud_format(const std::string& s) {
  if (s == "ply") return CloudFormat::ply;
  if (s == "xyz") return CloudFormat::xyz;
  if (s == "kitti_bin" || s == "bin") return CloudFormat::kitti_bin;
  throw SpecError("unknown cloud format '" + s + "' (expected ply, xyz or kitti_bin)");
}

inline const char* extension(CloudFormat f) {
  switch (f) {
    case CloudFormat::ply: return ".ply";
    case CloudFormat::xyz: return ".xyz";
    case CloudFormat::kitti_bin: return ".bin";
  }
  return "";
}

struct LoadOptions {
  double association_tolerance = 0.05;  // seconds
  double min_range = 0.5;               // meters, sensor frame
  double max_range = 120.0;
};

struct RawCloud {
  std::vector<Point3> points;
  std::optional<double> timestamp;
  std::optional<std::int64_t> frame_id;
};

// ---------------------------------------------------------------------------
// Trajectory (TUM: "timestamp tx ty tz qx qy qz qw")
// ---------------------------------------------------------------------------

inline Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open trajectory");
  std::vector<TrajectorySample> samples;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    std::istringstream ls(line);
    double v[8];
    for (double& x : v) {
      if (!(ls >> x)) throw ParseError(path + ":" + std::to_string(line_no) + ": expected 8 numbers");
    }
    std::string extra;
    if (ls >> extra) throw ParseError(path + ":" + std::to_string(line_no) + ": trailing data '" + extra + "'");
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (!(q.norm() > 1e-12) || !std::isfinite(q.norm())) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": invalid quaternion");
    }
    if (!samples.empty() && !(v[0] > samples.back().timestamp)) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": timestamps must be strictly increasing");
    }
    samples.push_back({v[0], Pose(Point3(v[1], v[2], v[3]), q)});
  }
  return Trajectory(std::move(samples));
}

inline void write_trajectory(const std::string& path, const Trajectory& traj) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(path + ": cannot open for writing");
  std::fprintf(f, "# timestamp tx ty tz qx qy qz qw\n");
  for (const auto& s : traj.samples()) {
    const auto& p = s.pose.position;
    const auto& q = s.pose.orientation;
    std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", s.timestamp, p.x(), p.y(), p.z(), q.x(), q.y(),
                 q.z(), q.w());
  }
  std::fclose(f);
}

// ---------------------------------------------------------------------------
// Single clouds
// ---------------------------------------------------------------------------

inline RawCloud read_ply_cloud(const std::string& path) {
  const PlyData d = read_ply(path);
  RawCloud c;
  c.points = d.points();
  auto num = [&](const char* key) -> std::optional<double> {
    if (auto v = d.comment_value(key)) {
      try {
        return std::stod(*v);
      } catch (const std::exception&) {
        throw ParseError(path + ": comment '" + key + "' is not a number");
      }
    }
    return std::nullopt;
  };
  c.timestamp = num("timestamp");
  if (auto id = num("frame_id")) c.frame_id = static_cast<std::int64_t>(*id);
  return c;
}

inline RawCloud read_xyz_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  RawCloud c;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z)) throw ParseError(path + ":" + std::to_string(line_no) + ": expected 'x y z'");
    c.points.emplace_back(x, y, z);
  }
  return c;
}

inline RawCloud read_kitti_cloud(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open file");
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() % 16 != 0) {
    throw ParseError(path + ": truncated record at byte offset " + std::to_string(data.size() - data.size() % 16));
  }
  RawCloud c;
  c.points.reserve(data.size() / 16);
  for (std::size_t off = 0; off < data.size(); off += 16) {
    float v[4];
    std::memcpy(v, data.data() + off, sizeof v);
    c.points.emplace_back(v[0], v[1], v[2]);
  }
  return c;
}

inline RawCloud read_cloud(const std::string& path, CloudFormat fmt) {
  switch (fmt) {
    case CloudFormat::ply: return read_ply_cloud(path);
    case CloudFormat::xyz: return read_xyz_cloud(path);
    case CloudFormat::kitti_bin: return read_kitti_cloud(path);
  }
  return {};
}

/// Binary PLY with float32 x,y,z and frame_id / timestamp header comments.
inline void write_frame_ply(const std::string& path, const ScanFrame& frame, bool binary = true) {
  char ts[64];
  std::snprintf(ts, sizeof ts, "timestamp %.17g", frame.timestamp);
  write_ply(path, xyz_columns(frame.points), {}, binary, {"frame_id " + std::to_string(frame.frame_id), ts});
}

inline void write_kitti_cloud(const std::string& path, const std::vector<Point3>& pts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open for writing");
  for (const auto& p : pts) {
    const float v[4] = {static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z()), 0.0f};
    out.write(reinterpret_cast<const char*>(v), sizeof v);
  }
}

inline void write_xyz_cloud(const std::string& path, const std::vector<Point3>& pts) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(path + ": cannot open for writing");
  for (const auto& p : pts) std::fprintf(f, "%.9g %.9g %.9g\n", p.x(), p.y(), p.z());
  std::fclose(f);
}

// ---------------------------------------------------------------------------
// Sequences
// ---------------------------------------------------------------------------

inline std::vector<std::string> list_clouds(const std::string& path, CloudFormat fmt) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw ParseError(path + ": no such file or directory");
  if (!fs::is_directory(path)) return {path};
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().extension() == extension(fmt)) files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline std::vector<double> read_times(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open times file");
  std::vector<double> t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    std::istringstream ls(line);
    double v;
    if (!(ls >> v)) throw ParseError(path + ":" + std::to_string(line_no) + ": expected a timestamp");
    t.push_back(v);
  }
  return t;
}

/// Pose of the trajectory sample nearest to `t`; AssociationError when the
/// gap exceeds `tolerance`.
inline Pose associate(const Trajectory& traj, double t, double tolerance, const std::string& what) {
  if (traj.empty()) throw AssociationError(what + ": trajectory is empty");
  const auto& s = traj[traj.nearest(t)];
  const double gap = std::abs(s.timestamp - t);
  if (gap > tolerance) {
    char msg[160];
    std::snprintf(msg, sizeof msg, ": timestamp %.6f has no pose within %.3f s (nearest %.6f)", t, tolerance, s.timestamp);
    throw AssociationError(what + msg);
  }
  return s.pose;
}

/// Load every cloud under `cloud_path` and attach poses from `traj_path`.
/// Points outside [min_range, max_range] (sensor frame) are dropped.
inline std::vector<ScanFrame> load_frames(const std::string& cloud_path, const std::string& traj_path, CloudFormat fmt,
                                          const LoadOptions& opt = {}) {
  namespace fs = std::filesystem;
  const Trajectory traj = read_trajectory(traj_path);
  const auto files = list_clouds(cloud_path, fmt);
  if (files.empty()) throw ParseError(cloud_path + ": no " + std::string(extension(fmt)) + " clouds found");

  std::optional<std::vector<double>> times;
  auto sidecar = [&]() -> const std::vector<double>& {
    if (!times) {
      const fs::path base = fs::is_directory(cloud_path) ? fs::path(cloud_path) : fs::path(cloud_path).parent_path();
      times = read_times((base / "times.txt").string());
      if (times->size() < files.size()) {
        throw ParseError((base / "times.txt").string() + ": has " + std::to_string(times->size()) + " entries for " +
                         std::to_string(files.size()) + " clouds");
      }
    }
    return *times;
  };

  std::vector<ScanFrame> frames;
  frames.reserve(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    RawCloud raw = read_cloud(files[i], fmt);
    ScanFrame f;
    f.frame_id = raw.frame_id.value_or(static_cast<std::int64_t>(i));
    f.timestamp = raw.timestamp ? *raw.timestamp : sidecar()[i];
    f.pose = associate(traj, f.timestamp, opt.association_tolerance, files[i]);
    f.points.reserve(raw.points.size());
    for (const auto& p : raw.points) {
      if (!is_finite(p)) continue;
      const double r = p.norm();
      if (r < opt.min_range || r > opt.max_range || r <= 1e-6) continue;
      f.points.push_back(p);
    }
    if (!frames.empty() && f.frame_id <= frames.back().frame_id) {
      throw ParseError(files[i] + ": frame_id " + std::to_string(f.frame_id) + " does not increase");
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace losmap
