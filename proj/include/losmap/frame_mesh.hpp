#pragma once

// Single-frame boundary meshing.
//
// The frame's points are radially inverted about the sensor (mirror kernel),
// split into azimuth sectors, and each sector is hulled together with the
// sensor origin. Because inversion keeps point order, hull faces map back
// onto the original points directly. Faces are then oriented toward the
// sensor, weighted by how squarely they face it, and faces that are nearly
// parallel to the viewing rays are culled. Per-point normals are the
// weight-averaged normals of the surviving adjacent faces.

#include "losmap/hull.hpp"
#include "losmap/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace losmap {

struct GhprParams {
  double gamma = 5011.872336272722;  // 10^3.7
  double sector_angle = kPi / 6.0;
  double w_min = 0.05;

  GhprParams() = default;
  GhprParams(double g, double angle, double wmin) : gamma(g), sector_angle(angle), w_min(wmin) { normalize(); }

  /// Snap sector_angle so that it divides the full circle; validate ranges.
  void normalize() {
    if (!(gamma > 1.0)) throw DomainError("gamma must be > 1");
    if (!(sector_angle > 0.0) || sector_angle > kTwoPi + 1e-12) {
      throw DomainError("sector_angle must be in (0, 2*pi]");
    }
    if (!(w_min >= 0.0 && w_min <= 1.0)) throw DomainError("w_min must be in [0, 1]");
    sector_angle = kTwoPi / static_cast<double>(sector_count());
  }

  int sector_count() const { return std::max(1, static_cast<int>(std::lround(kTwoPi / sector_angle))); }
};

struct SectorReport {
  int sector = 0;
  std::size_t point_count = 0;
  std::string reason;
};

struct FrameMesh {
  std::int64_t frame_id = 0;
  Pose pose;
  std::vector<Point3> points;                // sensor-local
  std::vector<Triangle> faces;               // index == points.size() is the viewpoint
  std::vector<Vec3> face_normals;            // unit, facing the viewpoint
  std::vector<double> face_weights;          // confidence in [0,1]
  std::vector<std::uint8_t> face_on_viewpoint;
  std::vector<int> sector_of_face;
  std::vector<Vec3> point_normals;           // unit, or zero when invalid
  std::vector<std::uint8_t> normal_valid;
  int sector_count = 0;
  std::vector<int> meshed_sectors;           // sectors that produced faces
  std::vector<SectorReport> skipped;

  std::uint32_t viewpoint_index() const { return static_cast<std::uint32_t>(points.size()); }

  Point3 vertex(std::uint32_t i) const { return i == viewpoint_index() ? Point3::Zero() : points[i]; }

  bool is_real_face(std::size_t f) const { return !face_on_viewpoint[f]; }
};

/// Inversion with an externally supplied maximum norm (the frame-wide
/// maximum, so sector-by-sector inversion matches whole-frame inversion).
inline std::vector<Point3> ghpr_invert(std::span<const Point3> points, double gamma, double max_norm) {
  std::vector<Point3> out;
  out.reserve(points.size());
  const double reach = gamma * max_norm;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double n = points[i].norm();
    if (!(n > 0.0)) throw DomainError("ghpr_invert: point " + std::to_string(i) + " has zero norm");
    out.push_back(((reach - n) / n) * points[i]);
  }
  return out;
}

/// Mirror-kernel inversion: p' = (gamma * M - |p|) p / |p| with M the
/// largest point norm of the input.
inline std::vector<Point3> ghpr_invert(std::span<const Point3> points, double gamma) {
  double max_norm = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double n = points[i].norm();
    if (!(n > 0.0)) throw DomainError("ghpr_invert: point " + std::to_string(i) + " has zero norm");
    max_norm = std::max(max_norm, n);
  }
  return ghpr_invert(points, gamma, max_norm);
}

/// Sector of a sensor-local direction: floor(azimuth / angle), azimuth in [0, 2pi).
inline int sector_of(const Point3& p, double sector_angle, int sector_count) {
  double az = std::atan2(p.y(), p.x());
  if (az < 0.0) az += kTwoPi;
  const int s = static_cast<int>(std::floor(az / sector_angle));
  return std::clamp(s, 0, sector_count - 1);
}

inline std::vector<std::vector<std::uint32_t>> partition_sectors(std::span<const Point3> points, double sector_angle) {
  const int k = std::max(1, static_cast<int>(std::lround(kTwoPi / sector_angle)));
  const double angle = kTwoPi / k;
  std::vector<std::vector<std::uint32_t>> sectors(static_cast<std::size_t>(k));
  for (std::uint32_t i = 0; i < points.size(); ++i) {
    sectors[static_cast<std::size_t>(sector_of(points[i], angle, k))].push_back(i);
  }
  return sectors;
}

inline std::vector<std::vector<std::uint32_t>> partition_sectors(const ScanFrame& frame, double sector_angle) {
  return partition_sectors(frame.points, sector_angle);
}

/// Faces of a sector, before and after culling, in frame point indices.
struct SectorMesh {
  int sector = 0;
  std::vector<Triangle> hull_faces;  // closed hull of the sector, pre-cull
  std::size_t hull_vertex_count = 0;
  std::vector<Triangle> faces;       // oriented toward the viewpoint, culled
  std::vector<Vec3> normals;
  std::vector<double> weights;
  std::vector<std::uint8_t> on_viewpoint;
  std::size_t culled = 0;
};

namespace detail {

inline double frame_max_norm(std::span<const Point3> points) {
  double m = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double n = points[i].norm();
    if (!(n > 0.0)) throw DomainError("frame point " + std::to_string(i) + " has zero norm");
    m = std::max(m, n);
  }
  return m;
}

/// Hull of the inverted sector points plus the origin, mapped back to frame
/// indices. `viewpoint` is the index used for the origin.
inline HullMesh sector_hull_inverted(std::span<const Point3> inverted, std::span<const std::uint32_t> sector,
                                     std::uint32_t viewpoint) {
  std::vector<Point3> local;
  local.reserve(sector.size() + 1);
  for (auto i : sector) local.push_back(inverted[i]);
  local.push_back(Point3::Zero());
  HullMesh h = quickhull(local, default_hull_epsilon(local));
  const auto vp_local = static_cast<std::uint32_t>(sector.size());
  auto map = [&](std::uint32_t li) { return li == vp_local ? viewpoint : sector[li]; };
  for (auto& f : h.faces) {
    for (auto& v : f) v = map(v);
  }
  for (auto& v : h.vertex_indices) v = map(v);
  std::sort(h.vertex_indices.begin(), h.vertex_indices.end());
  return h;
}

inline SectorMesh orient_and_cull(std::span<const Point3> points, HullMesh&& hull, int sector, double w_min) {
  SectorMesh sm;
  sm.sector = sector;
  sm.hull_vertex_count = hull.vertex_indices.size();
  const auto vp = static_cast<std::uint32_t>(points.size());
  auto pos = [&](std::uint32_t i) { return i == vp ? Point3::Zero() : points[i]; };
  for (const auto& f : hull.faces) {
    Triangle t = f;
    const bool on_vp = t[0] == vp || t[1] == vp || t[2] == vp;
    const Point3 a = pos(t[0]), b = pos(t[1]), c = pos(t[2]);
    Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    const Point3 centroid = (a + b + c) / 3.0;
    const double dist = centroid.norm();
    double w = 0.0;
    if (on_vp) {
      // The plane contains the viewpoint, so n.(s - c) is rounding noise.
      // Keep the hull's winding and give the face zero weight.
      n = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    } else if (len > 0.0 && dist > 0.0) {
      n /= len;
      const double facing = -n.dot(centroid) / dist;  // n . (s - c) / |s - c|, s = origin
      if (facing < 0.0) {
        n = -n;
        std::swap(t[1], t[2]);
      }
      w = std::abs(facing);
    } else {
      n = Vec3::Zero();
    }
    if (!on_vp && (w < w_min || len == 0.0)) {
      ++sm.culled;
      continue;
    }
    sm.faces.push_back(t);
    sm.normals.push_back(n);
    sm.weights.push_back(std::min(w, 1.0));
    sm.on_viewpoint.push_back(on_vp ? 1 : 0);
  }
  sm.hull_faces = std::move(hull.faces);
  return sm;
}

}  // namespace detail

/// Pre-cull hull of one sector (inverted points plus viewpoint), in frame
/// point indices; the viewpoint has index frame.points.size().
inline HullMesh sector_hull(const ScanFrame& frame, std::span<const std::uint32_t> sector, const GhprParams& params) {
  const double m = detail::frame_max_norm(frame.points);
  const auto inverted = ghpr_invert(frame.points, params.gamma, m);
  return detail::sector_hull_inverted(inverted, sector, static_cast<std::uint32_t>(frame.points.size()));
}

/// Mesh one sector. Throws DegeneracyError when the sector cannot be hulled
/// (fewer than 3 points or degenerate geometry).
inline SectorMesh mesh_sector(const ScanFrame& frame, std::span<const std::uint32_t> sector, const GhprParams& params,
                              int sector_id = 0) {
  if (sector.size() < 3) throw DegeneracyError("sector has fewer than 3 points");
  return detail::orient_and_cull(frame.points, sector_hull(frame, sector, params), sector_id, params.w_min);
}

/// Weighted face-normal average per point over adjacent non-viewpoint faces.
/// Points without such faces (or with a vanishing sum) get the null flag.
inline void estimate_normals(FrameMesh& mesh) {
  const std::size_t n = mesh.points.size();
  std::vector<Vec3> acc(n, Vec3::Zero());
  std::vector<std::uint8_t> touched(n, 0);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    if (mesh.face_on_viewpoint[f]) continue;
    const Vec3 wn = mesh.face_weights[f] * mesh.face_normals[f];
    for (auto v : mesh.faces[f]) {
      acc[v] += wn;
      touched[v] = 1;
    }
  }
  mesh.point_normals.assign(n, Vec3::Zero());
  mesh.normal_valid.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double len = acc[i].norm();
    if (touched[i] && len >= 1e-12) {
      mesh.point_normals[i] = acc[i] / len;
      mesh.normal_valid[i] = 1;
    }
  }
}

/// Mesh a whole frame: sectors are hulled independently (in parallel) and
/// concatenated in sector order. Throws DegeneracyError if no sector meshes.
inline FrameMesh build_frame_mesh(const ScanFrame& frame, GhprParams params) {
  params.normalize();
  FrameMesh mesh;
  mesh.frame_id = frame.frame_id;
  mesh.pose = frame.pose;
  mesh.points = frame.points;
  mesh.sector_count = params.sector_count();
  if (frame.points.empty()) throw DegeneracyError("frame " + std::to_string(frame.frame_id) + " has no points");

  const double max_norm = detail::frame_max_norm(frame.points);
  const auto inverted = ghpr_invert(frame.points, params.gamma, max_norm);
  const auto sectors = partition_sectors(frame.points, params.sector_angle);
  const int k = static_cast<int>(sectors.size());
  const auto vp = static_cast<std::uint32_t>(frame.points.size());

  std::vector<SectorMesh> results(sectors.size());
  std::vector<std::string> errors(sectors.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int s = 0; s < k; ++s) {
    const auto& idx = sectors[static_cast<std::size_t>(s)];
    if (idx.size() < 3) {
      errors[static_cast<std::size_t>(s)] = idx.empty() ? "empty" : "fewer than 3 points";
      continue;
    }
    try {
      results[static_cast<std::size_t>(s)] =
          detail::orient_and_cull(frame.points, detail::sector_hull_inverted(inverted, idx, vp), s, params.w_min);
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(s)] = e.what();
    }
  }

  for (int s = 0; s < k; ++s) {
    const auto us = static_cast<std::size_t>(s);
    if (!errors[us].empty()) {
      mesh.skipped.push_back({s, sectors[us].size(), errors[us]});
      continue;
    }
    auto& r = results[us];
    if (r.faces.empty()) {
      mesh.skipped.push_back({s, sectors[us].size(), "no faces after culling"});
      continue;
    }
    mesh.meshed_sectors.push_back(s);
    mesh.faces.insert(mesh.faces.end(), r.faces.begin(), r.faces.end());
    mesh.face_normals.insert(mesh.face_normals.end(), r.normals.begin(), r.normals.end());
    mesh.face_weights.insert(mesh.face_weights.end(), r.weights.begin(), r.weights.end());
    mesh.face_on_viewpoint.insert(mesh.face_on_viewpoint.end(), r.on_viewpoint.begin(), r.on_viewpoint.end());
    mesh.sector_of_face.insert(mesh.sector_of_face.end(), r.faces.size(), s);
  }
  if (mesh.meshed_sectors.empty()) {
    throw DegeneracyError("frame " + std::to_string(frame.frame_id) + ": every sector is degenerate");
  }
  estimate_normals(mesh);
  return mesh;
}

}  // namespace losmap
