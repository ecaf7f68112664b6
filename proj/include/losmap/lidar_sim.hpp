#pragma once

// Synthetic spinning multi-beam scanner over analytic primitives.
//
// Every beam is intersected exactly against the scene (no tessellation), so
// hit points, surface normals and moving-object labels are exact ground
// truth. Range noise is Gaussian along the beam. Frames are instantaneous
// snapshots at t = t0 + i / rate.

#include "losmap/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace losmap {

enum class PrimitiveKind { box, plane, cylinder, sphere };

inline const char* to_string(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::box: return "box";
    case PrimitiveKind::plane: return "plane";
    case PrimitiveKind::cylinder: return "cylinder";
    case PrimitiveKind::sphere: return "sphere";
  }
  return "?";
}

/// Shape in its own frame, placed by `pose`:
///  - box: centered, half extents `size`
///  - plane: through the origin with normal +z
///  - cylinder: axis +z, radius size.x, height size.z, centered
///  - sphere: centered, radius size.x
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::sphere;
  Pose pose;
  Vec3 size = Vec3::Ones();

  static Primitive box(const Point3& center, const Vec3& half, const Eigen::Quaterniond& q = Eigen::Quaterniond::Identity()) {
    return {PrimitiveKind::box, Pose(center, q), half};
  }
  static Primitive plane(const Point3& point, const Vec3& normal) {
    return {PrimitiveKind::plane, Pose(point, Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), normal.normalized())),
            Vec3::Ones()};
  }
  static Primitive sphere(const Point3& center, double radius) {
    return {PrimitiveKind::sphere, Pose(center, Eigen::Quaterniond::Identity()), Vec3(radius, radius, radius)};
  }
  static Primitive cylinder(const Point3& center, double radius, double height,
                            const Eigen::Quaterniond& q = Eigen::Quaterniond::Identity()) {
    return {PrimitiveKind::cylinder, Pose(center, q), Vec3(radius, radius, height)};
  }
};

struct Waypoint {
  double t = 0.0;
  Pose pose;
};

/// Moving primitive. It exists only while t lies within its waypoint span.
struct Mover {
  Primitive shape;  // in mover-local coordinates
  std::vector<Waypoint> waypoints;

  bool active(double t) const {
    return !waypoints.empty() && t >= waypoints.front().t && t <= waypoints.back().t;
  }

  Pose pose_at(double t) const {
    if (t <= waypoints.front().t) return waypoints.front().pose;
    if (t >= waypoints.back().t) return waypoints.back().pose;
    std::size_t i = 1;
    while (waypoints[i].t < t) ++i;
    const auto& a = waypoints[i - 1];
    const auto& b = waypoints[i];
    const double span = b.t - a.t;
    return interpolate(a.pose, b.pose, span > 0 ? (t - a.t) / span : 1.0);
  }

  Primitive placed(double t) const {
    const Pose m = pose_at(t);
    Primitive p = shape;
    p.pose.position = to_world(m, shape.pose.position);
    p.pose.orientation = (m.orientation * shape.pose.orientation).normalized();
    return p;
  }
};

struct SceneSpec {
  std::string name;
  std::vector<Primitive> statics;
  std::vector<Mover> movers;
};

struct ScannerSpec {
  int ring_count = 16;
  double fov_min_deg = -15.0;
  double fov_max_deg = 15.0;
  double horiz_res_deg = 0.2;
  double rate_hz = 10.0;
  double range_noise = 0.01;
  double max_range = 100.0;

  int azimuth_steps() const { return static_cast<int>(std::lround(360.0 / horiz_res_deg)); }
  std::size_t beam_count() const { return static_cast<std::size_t>(ring_count) * static_cast<std::size_t>(azimuth_steps()); }

  double ring_elevation(int r) const {
    const double deg = fov_min_deg + (fov_max_deg - fov_min_deg) * r / static_cast<double>(ring_count - 1);
    return deg * kPi / 180.0;
  }

  void validate() const {
    if (ring_count < 2) throw SpecError("scanner: ring_count must be >= 2");
    if (!(fov_max_deg > fov_min_deg)) throw SpecError("scanner: fov_max_deg must exceed fov_min_deg");
    if (!(horiz_res_deg > 0.0) || !(rate_hz > 0.0) || !(max_range > 0.0) || !(range_noise >= 0.0)) {
      throw SpecError("scanner: resolution, rate, max_range must be positive and range_noise >= 0");
    }
  }
};

struct SimFrame {
  ScanFrame frame;
  std::vector<Vec3> gt_normals;           // sensor-local, facing the sensor
  std::vector<std::uint8_t> gt_dynamic;   // 1 when the beam hit a mover
  std::vector<Point3> gt_surface;         // noise-free hit points, world frame
};

// ---------------------------------------------------------------------------
// Analytic ray casting
// ---------------------------------------------------------------------------

struct PrimitiveHit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal = Vec3::Zero();  // world frame, not yet oriented
};

namespace detail {

constexpr double kRayEps = 1e-9;

inline std::optional<PrimitiveHit> intersect_local(PrimitiveKind kind, const Vec3& size, const Point3& o, const Vec3& d) {
  PrimitiveHit hit;
  switch (kind) {
    case PrimitiveKind::plane: {
      if (d.z() == 0.0) return std::nullopt;
      const double t = -o.z() / d.z();
      if (t <= kRayEps) return std::nullopt;
      hit.t = t;
      hit.normal = Vec3::UnitZ();
      return hit;
    }
    case PrimitiveKind::sphere: {
      const double r = size.x();
      const double b = o.dot(d);
      const double c = o.squaredNorm() - r * r;
      const double disc = b * b - c;
      if (disc < 0.0) return std::nullopt;
      const double sq = std::sqrt(disc);
      double t = -b - sq;
      if (t <= kRayEps) t = -b + sq;
      if (t <= kRayEps) return std::nullopt;
      hit.t = t;
      hit.normal = (o + t * d).normalized();
      return hit;
    }
    case PrimitiveKind::box: {
      double tmin = -std::numeric_limits<double>::infinity();
      double tmax = std::numeric_limits<double>::infinity();
      int axis_min = -1, axis_max = -1;
      for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
          if (std::abs(o[a]) > size[a]) return std::nullopt;
          continue;
        }
        double t0 = (-size[a] - o[a]) / d[a];
        double t1 = (size[a] - o[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > tmin) {
          tmin = t0;
          axis_min = a;
        }
        if (t1 < tmax) {
          tmax = t1;
          axis_max = a;
        }
      }
      if (tmin > tmax) return std::nullopt;
      double t = tmin;
      int axis = axis_min;
      if (t <= kRayEps) {
        t = tmax;
        axis = axis_max;
      }
      if (t <= kRayEps || axis < 0) return std::nullopt;
      hit.t = t;
      Vec3 n = Vec3::Zero();
      n[axis] = (o[axis] + t * d[axis]) > 0.0 ? 1.0 : -1.0;
      hit.normal = n;
      return hit;
    }
    case PrimitiveKind::cylinder: {
      const double r = size.x();
      const double hz = 0.5 * size.z();
      double best = std::numeric_limits<double>::infinity();
      Vec3 bn = Vec3::Zero();
      const double a = d.x() * d.x() + d.y() * d.y();
      if (a > 0.0) {
        const double b = o.x() * d.x() + o.y() * d.y();
        const double c = o.x() * o.x() + o.y() * o.y() - r * r;
        const double disc = b * b - a * c;
        if (disc >= 0.0) {
          const double sq = std::sqrt(disc);
          for (double t : {(-b - sq) / a, (-b + sq) / a}) {
            if (t <= kRayEps || t >= best) continue;
            const Point3 p = o + t * d;
            if (std::abs(p.z()) <= hz) {
              best = t;
              bn = Vec3(p.x(), p.y(), 0.0).normalized();
            }
          }
        }
      }
      if (d.z() != 0.0) {
        for (double cap : {-hz, hz}) {
          const double t = (cap - o.z()) / d.z();
          if (t <= kRayEps || t >= best) continue;
          const Point3 p = o + t * d;
          if (p.x() * p.x() + p.y() * p.y() <= r * r) {
            best = t;
            bn = Vec3(0, 0, cap > 0 ? 1.0 : -1.0);
          }
        }
      }
      if (!std::isfinite(best)) return std::nullopt;
      hit.t = best;
      hit.normal = bn;
      return hit;
    }
  }
  return std::nullopt;
}

inline bool inside_local(PrimitiveKind kind, const Vec3& size, const Point3& p) {
  switch (kind) {
    case PrimitiveKind::plane: return false;
    case PrimitiveKind::sphere: return p.norm() < size.x();
    case PrimitiveKind::box: return (p.cwiseAbs() - size).maxCoeff() < 0.0;
    case PrimitiveKind::cylinder:
      return p.x() * p.x() + p.y() * p.y() < size.x() * size.x() && std::abs(p.z()) < 0.5 * size.z();
  }
  return false;
}

}  // namespace detail

/// Nearest intersection of the ray o + t d (d unit) with a placed primitive.
inline std::optional<PrimitiveHit> intersect(const Primitive& prim, const Point3& o, const Vec3& d) {
  const Point3 lo = to_local(prim.pose, o);
  const Vec3 ld = prim.pose.orientation.conjugate() * d;
  auto hit = detail::intersect_local(prim.kind, prim.size, lo, ld);
  if (hit) hit->normal = (prim.pose.orientation * hit->normal).normalized();
  return hit;
}

inline bool contains(const Primitive& prim, const Point3& p) {
  return detail::inside_local(prim.kind, prim.size, to_local(prim.pose, p));
}

/// Unsigned distance from p to the primitive's surface.
inline double surface_distance(const Primitive& prim, const Point3& p) {
  const Point3 q = to_local(prim.pose, p);
  const Vec3& s = prim.size;
  switch (prim.kind) {
    case PrimitiveKind::plane: return std::abs(q.z());
    case PrimitiveKind::sphere: return std::abs(q.norm() - s.x());
    case PrimitiveKind::box: {
      const Vec3 dq = q.cwiseAbs() - s;
      const double outside = dq.cwiseMax(0.0).norm();
      const double inside = std::min(dq.maxCoeff(), 0.0);
      return std::abs(outside + inside);
    }
    case PrimitiveKind::cylinder: {
      const double radial = std::hypot(q.x(), q.y()) - s.x();
      const double axial = std::abs(q.z()) - 0.5 * s.z();
      const double outside = std::hypot(std::max(radial, 0.0), std::max(axial, 0.0));
      const double inside = std::min(std::max(radial, axial), 0.0);
      return std::abs(outside + inside);
    }
  }
  return std::numeric_limits<double>::infinity();
}

/// Distance from p to the nearest static surface of the scene.
inline double static_surface_distance(const SceneSpec& scene, const Point3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : scene.statics) best = std::min(best, surface_distance(s, p));
  return best;
}

// ---------------------------------------------------------------------------
// Scanning
// ---------------------------------------------------------------------------

/// One sweep from `pose` at scene time `t`. `seed` and `frame_index` fully
/// determine the noise.
inline SimFrame simulate_frame(const SceneSpec& scene, const ScannerSpec& scanner, const Pose& pose, double t,
                               std::int64_t frame_index, std::uint64_t seed) {
  scanner.validate();
  std::vector<Primitive> prims = scene.statics;
  const std::size_t n_static = prims.size();
  for (const auto& m : scene.movers) {
    if (m.active(t)) prims.push_back(m.placed(t));
  }
  for (std::size_t i = 0; i < prims.size(); ++i) {
    if (contains(prims[i], pose.position)) {
      throw SpecError(std::string("sensor is inside a ") + to_string(prims[i].kind) + " primitive (index " +
                      std::to_string(i) + ") at t=" + std::to_string(t));
    }
  }

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(frame_index), static_cast<std::uint32_t>(frame_index >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> noise(0.0, 1.0);

  SimFrame out;
  out.frame.frame_id = frame_index;
  out.frame.timestamp = t;
  out.frame.pose = pose;
  const std::size_t beams = scanner.beam_count();
  out.frame.points.reserve(beams);
  out.gt_normals.reserve(beams);
  out.gt_dynamic.reserve(beams);
  out.gt_surface.reserve(beams);

  const int steps = scanner.azimuth_steps();
  std::vector<double> cos_el(static_cast<std::size_t>(scanner.ring_count)), sin_el(cos_el.size());
  for (int r = 0; r < scanner.ring_count; ++r) {
    cos_el[static_cast<std::size_t>(r)] = std::cos(scanner.ring_elevation(r));
    sin_el[static_cast<std::size_t>(r)] = std::sin(scanner.ring_elevation(r));
  }
  const Eigen::Matrix3d rot = pose.rotation();
  for (int k = 0; k < steps; ++k) {
    const double az = kTwoPi * k / static_cast<double>(steps);
    const double ca = std::cos(az), sa = std::sin(az);
    for (int r = 0; r < scanner.ring_count; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      const Vec3 dl(cos_el[ur] * ca, cos_el[ur] * sa, sin_el[ur]);
      const Vec3 dw = rot * dl;
      double best = std::numeric_limits<double>::infinity();
      Vec3 normal = Vec3::Zero();
      std::size_t who = 0;
      for (std::size_t i = 0; i < prims.size(); ++i) {
        const auto h = intersect(prims[i], pose.position, dw);
        if (h && h->t < best) {
          best = h->t;
          normal = h->normal;
          who = i;
        }
      }
      // Draw noise for every beam so the sequence does not depend on hits.
      const double eps = scanner.range_noise * noise(rng);
      if (!std::isfinite(best) || best > scanner.max_range) continue;
      const double range = best + eps;
      if (!(range > 0.0)) continue;
      Vec3 nl = rot.transpose() * normal;
      if (nl.dot(dl) > 0.0) nl = -nl;
      out.frame.points.push_back(range * dl);
      out.gt_normals.push_back(nl);
      out.gt_dynamic.push_back(who >= n_static ? 1 : 0);
      out.gt_surface.push_back(pose.position + best * dw);
    }
  }
  return out;
}

/// `frames` sweeps at t0 + i / rate where t0 is the first trajectory stamp.
inline std::vector<SimFrame> simulate(const SceneSpec& scene, const ScannerSpec& scanner, const Trajectory& traj,
                                      int frames, std::uint64_t seed) {
  scanner.validate();
  if (traj.empty()) throw SpecError("simulate: empty sensor trajectory");
  const double t0 = traj.start_time();
  const double t_last = t0 + (frames - 1) / scanner.rate_hz;
  if (frames > 0 && t_last > traj.end_time() + 1e-9) {
    throw SpecError("simulate: trajectory ends at " + std::to_string(traj.end_time()) + " but frame " +
                    std::to_string(frames - 1) + " needs t=" + std::to_string(t_last));
  }
  std::vector<SimFrame> out(static_cast<std::size_t>(std::max(frames, 0)));
  std::vector<std::string> errors(out.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < frames; ++i) {
    const double t = t0 + i / scanner.rate_hz;
    try {
      out[static_cast<std::size_t>(i)] = simulate_frame(scene, scanner, traj.pose_at(t), t, i, seed);
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw SpecError(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text formats
// ---------------------------------------------------------------------------

namespace detail {

inline std::string strip_comment(const std::string& line) {
  const auto pos = line.find('#');
  std::string s = pos == std::string::npos ? line : line.substr(0, pos);
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_numbers(std::istringstream& in, const std::string& where) {
  std::vector<double> v;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ParseError(where + ": expected a number, got '" + tok + "'");
    }
  }
  return v;
}

inline Eigen::Quaterniond quat_from(const std::vector<double>& v, std::size_t at) {
  Eigen::Quaterniond q(v[at + 3], v[at], v[at + 1], v[at + 2]);  // file order qx qy qz qw
  if (q.norm() < 1e-12) throw SpecError("zero quaternion");
  return q.normalized();
}

inline Primitive parse_primitive(const std::string& kind, const std::vector<double>& v, const std::string& where) {
  auto need = [&](std::size_t a, std::size_t b) {
    if (v.size() != a && v.size() != b) {
      throw ParseError(where + ": '" + kind + "' expects " + std::to_string(a) +
                       (a != b ? " or " + std::to_string(b) : std::string()) + " numbers, got " +
                       std::to_string(v.size()));
    }
  };
  auto positive = [&](double x, const char* what) {
    if (!(x > 0.0)) throw SpecError(where + ": " + kind + " " + what + " must be positive");
  };
  if (kind == "box") {
    need(6, 10);
    positive(v[3], "half extent");
    positive(v[4], "half extent");
    positive(v[5], "half extent");
    return Primitive::box({v[0], v[1], v[2]}, {v[3], v[4], v[5]},
                          v.size() == 10 ? quat_from(v, 6) : Eigen::Quaterniond::Identity());
  }
  if (kind == "plane") {
    need(6, 6);
    const Vec3 n(v[3], v[4], v[5]);
    if (n.norm() < 1e-12) throw SpecError(where + ": plane normal is zero");
    return Primitive::plane({v[0], v[1], v[2]}, n);
  }
  if (kind == "sphere") {
    need(4, 4);
    positive(v[3], "radius");
    return Primitive::sphere({v[0], v[1], v[2]}, v[3]);
  }
  if (kind == "cylinder") {
    need(5, 9);
    positive(v[3], "radius");
    positive(v[4], "height");
    return Primitive::cylinder({v[0], v[1], v[2]}, v[3], v[4],
                               v.size() == 9 ? quat_from(v, 5) : Eigen::Quaterniond::Identity());
  }
  throw ParseError(where + ": unknown primitive '" + kind + "'");
}

}  // namespace detail

/// Scene grammar, one statement per line, '#' starts a comment:
///   name = <text>
///   box      cx cy cz hx hy hz [qx qy qz qw]
///   plane    px py pz nx ny nz
///   sphere   cx cy cz r
///   cylinder cx cy cz r h [qx qy qz qw]
///   mover <primitive line>            shape in mover-local coordinates
///   waypoint t x y z [qx qy qz qw]    appended to the most recent mover
inline SceneSpec parse_scene(std::istream& in, const std::string& source = "scene") {
  SceneSpec scene;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::strip_comment(raw);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (const auto eq = line.find('='); eq != std::string::npos) {
      const std::string key = detail::strip_comment(line.substr(0, eq));
      const std::string val = detail::strip_comment(line.substr(eq + 1));
      if (key != "name") throw ParseError(where + ": unknown scene key '" + key + "'");
      scene.name = val;
      continue;
    }
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "mover") {
      std::string shape;
      ls >> shape;
      const auto v = detail::parse_numbers(ls, where);
      Mover m;
      m.shape = detail::parse_primitive(shape, v, where);
      if (m.shape.kind == PrimitiveKind::plane) throw SpecError(where + ": a mover cannot be a plane");
      scene.movers.push_back(std::move(m));
    } else if (kind == "waypoint") {
      if (scene.movers.empty()) throw ParseError(where + ": waypoint before any mover");
      const auto v = detail::parse_numbers(ls, where);
      if (v.size() != 4 && v.size() != 8) throw ParseError(where + ": waypoint expects 4 or 8 numbers");
      Waypoint w;
      w.t = v[0];
      w.pose = Pose({v[1], v[2], v[3]}, v.size() == 8 ? detail::quat_from(v, 4) : Eigen::Quaterniond::Identity());
      auto& wps = scene.movers.back().waypoints;
      if (!wps.empty() && !(w.t > wps.back().t)) throw SpecError(where + ": waypoint times must increase");
      wps.push_back(w);
    } else {
      const auto v = detail::parse_numbers(ls, where);
      scene.statics.push_back(detail::parse_primitive(kind, v, where));
    }
  }
  for (std::size_t i = 0; i < scene.movers.size(); ++i) {
    if (scene.movers[i].waypoints.empty()) throw SpecError(source + ": mover " + std::to_string(i) + " has no waypoints");
  }
  return scene;
}

inline SceneSpec load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open scene file");
  return parse_scene(in, path);
}

/// Scanner grammar: "key = value" lines. Keys: ring_count, fov_min_deg,
/// fov_max_deg, horiz_res_deg, rate_hz, range_noise, max_range.
inline ScannerSpec parse_scanner(std::istream& in, const std::string& source = "scanner") {
  ScannerSpec s;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::strip_comment(raw);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected 'key = value'");
    const std::string key = detail::strip_comment(line.substr(0, eq));
    const std::string val = detail::strip_comment(line.substr(eq + 1));
    double x = 0.0;
    try {
      std::size_t used = 0;
      x = std::stod(val, &used);
      if (used != val.size()) throw std::invalid_argument(val);
    } catch (const std::exception&) {
      throw ParseError(where + ": value for '" + key + "' is not a number");
    }
    if (key == "ring_count") s.ring_count = static_cast<int>(x);
    else if (key == "fov_min_deg") s.fov_min_deg = x;
    else if (key == "fov_max_deg") s.fov_max_deg = x;
    else if (key == "horiz_res_deg") s.horiz_res_deg = x;
    else if (key == "rate_hz") s.rate_hz = x;
    else if (key == "range_noise") s.range_noise = x;
    else if (key == "max_range") s.max_range = x;
    else throw ParseError(where + ": unknown scanner key '" + key + "'");
  }
  s.validate();
  return s;
}

inline ScannerSpec load_scanner(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open scanner file");
  return parse_scanner(in, path);
}

}  // namespace losmap
