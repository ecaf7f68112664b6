#pragma once

// Core geometric types shared by every module: points, poses, scan frames
// and trajectories, plus the error hierarchy used throughout the library.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace losmap {

using Point3 = Eigen::Vector3d;
using Vec3 = Eigen::Vector3d;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable input file. The message names the file and the
/// line (text formats) or byte offset (binary formats).
struct ParseError : Error {
  using Error::Error;
};

/// A cloud timestamp has no trajectory pose close enough to it.
struct AssociationError : Error {
  using Error::Error;
};

/// Input too degenerate for a geometric construction (hull, plane, ...).
struct DegeneracyError : Error {
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : Error {
  using Error::Error;
};

/// Invalid scene, scanner or configuration description.
struct SpecError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Pose
// ---------------------------------------------------------------------------

/// Rigid world-from-sensor transform.
struct Pose {
  Point3 position = Point3::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  Pose() = default;
  Pose(const Point3& p, const Eigen::Quaterniond& q) : position(p), orientation(q.normalized()) {}

  static Pose identity() { return {}; }

  Eigen::Matrix3d rotation() const { return orientation.toRotationMatrix(); }
};

inline Point3 to_world(const Pose& pose, const Point3& p) {
  return pose.orientation * p + pose.position;
}

inline Point3 to_local(const Pose& pose, const Point3& p) {
  return pose.orientation.conjugate() * (p - pose.position);
}

/// Linear position / spherical orientation blend, `alpha` in [0,1].
inline Pose interpolate(const Pose& a, const Pose& b, double alpha) {
  Pose out;
  out.position = (1.0 - alpha) * a.position + alpha * b.position;
  out.orientation = a.orientation.slerp(alpha, b.orientation).normalized();
  return out;
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

/// One LiDAR sweep. Points are kept in sensor-local coordinates.
struct ScanFrame {
  std::int64_t frame_id = 0;
  double timestamp = 0.0;
  Pose pose;
  std::vector<Point3> points;

  std::size_t size() const { return points.size(); }
  Point3 world_point(std::size_t i) const { return to_world(pose, points[i]); }
};

inline Point3 to_world(const ScanFrame& frame, const Point3& p) { return to_world(frame.pose, p); }
inline Point3 to_local(const ScanFrame& frame, const Point3& p) { return to_local(frame.pose, p); }

struct TrajectorySample {
  double timestamp = 0.0;
  Pose pose;
};

/// Time-ordered sensor poses. Timestamps are strictly increasing.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<TrajectorySample> samples) : samples_(std::move(samples)) {
    for (std::size_t i = 1; i < samples_.size(); ++i) {
      if (!(samples_[i].timestamp > samples_[i - 1].timestamp)) {
        throw SpecError("trajectory timestamps must be strictly increasing (sample " +
                        std::to_string(i) + ")");
      }
    }
  }

  void push_back(double t, const Pose& pose) {
    if (!samples_.empty() && !(t > samples_.back().timestamp)) {
      throw SpecError("trajectory timestamps must be strictly increasing");
    }
    samples_.push_back({t, pose});
  }

  bool empty() const { return samples_.empty(); }
  std::size_t size() const { return samples_.size(); }
  const TrajectorySample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<TrajectorySample>& samples() const { return samples_; }
  double start_time() const { return samples_.front().timestamp; }
  double end_time() const { return samples_.back().timestamp; }

  /// Index of the sample closest in time to `t` (earlier sample wins ties).
  std::size_t nearest(double t) const {
    auto it = std::lower_bound(samples_.begin(), samples_.end(), t,
                               [](const TrajectorySample& s, double v) { return s.timestamp < v; });
    if (it == samples_.begin()) return 0;
    if (it == samples_.end()) return samples_.size() - 1;
    const auto hi = static_cast<std::size_t>(it - samples_.begin());
    const auto lo = hi - 1;
    return (t - samples_[lo].timestamp) <= (samples_[hi].timestamp - t) ? lo : hi;
  }

  /// Pose at time `t`, interpolated between bracketing samples.
  Pose pose_at(double t) const {
    if (samples_.empty()) throw SpecError("empty trajectory");
    if (t <= samples_.front().timestamp) return samples_.front().pose;
    if (t >= samples_.back().timestamp) return samples_.back().pose;
    auto it = std::lower_bound(samples_.begin(), samples_.end(), t,
                               [](const TrajectorySample& s, double v) { return s.timestamp < v; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    return interpolate(a.pose, b.pose, (t - a.timestamp) / (b.timestamp - a.timestamp));
  }

 private:
  std::vector<TrajectorySample> samples_;
};

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

inline bool is_finite(const Point3& p) {
  return std::isfinite(p.x()) && std::isfinite(p.y()) && std::isfinite(p.z());
}

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

}  // namespace losmap
