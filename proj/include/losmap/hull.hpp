#pragma once

// 3D convex hull by quickhull.
//
// Plane tests use a single absolute tolerance `eps`: a point is "outside" a
// face when its signed plane distance exceeds eps. Output faces are
// triangles wound counter-clockwise seen from outside, indexing the input
// array. No facet merging is performed, so nearly coplanar input yields a
// triangulated (possibly very slightly non-convex) surface.

#include "losmap/types.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace losmap {

using Triangle = std::array<std::uint32_t, 3>;

struct HullMesh {
  std::vector<std::uint32_t> vertex_indices;  // sorted, unique
  std::vector<Triangle> faces;
  std::vector<Vec3> face_normals;  // unit, outward
};

/// 1e-7 times the bounding-box diagonal of `points`.
inline double default_hull_epsilon(std::span<const Point3> points) {
  if (points.empty()) return 0.0;
  Point3 lo = points[0], hi = points[0];
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return 1e-7 * (hi - lo).norm();
}

namespace detail {

struct HullFace {
  Triangle v{};
  std::array<std::uint32_t, 3> adj{};  // adj[i] shares edge (v[i], v[i+1])
  Vec3 normal = Vec3::Zero();
  double offset = 0.0;
  std::vector<std::uint32_t> outside;
  std::uint32_t eye = 0;
  double eye_dist = -std::numeric_limits<double>::infinity();
  bool alive = true;
  bool visible = false;

  double distance(const Point3& p) const { return normal.dot(p) - offset; }
};

struct HorizonEdge {
  std::uint32_t from, to;
  std::uint32_t face;  // surviving face across the edge
};

class QuickHull {
 public:
  QuickHull(std::span<const Point3> pts, double eps) : pts_(pts), eps_(eps) {}

  HullMesh run() {
    if (pts_.size() < 4) throw DegeneracyError("quickhull: need at least 4 points, got " + std::to_string(pts_.size()));
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      if (!is_finite(pts_[i])) throw DomainError("quickhull: non-finite point " + std::to_string(i));
    }
    build_simplex();
    for (std::uint32_t fi = 0; fi < 4; ++fi) {
      if (!faces_[fi].outside.empty()) pending_.push_back(fi);
    }
    while (!pending_.empty()) {
      const auto fi = pending_.back();
      pending_.pop_back();
      if (!faces_[fi].alive || faces_[fi].outside.empty()) continue;
      add_point(fi);
    }
    return collect();
  }

 private:
  std::span<const Point3> pts_;
  double eps_;
  std::vector<HullFace> faces_;
  std::vector<std::uint32_t> visible_;
  std::vector<HorizonEdge> horizon_;
  std::vector<std::uint32_t> orphans_;
  std::vector<std::uint32_t> free_;     // dead face slots available for reuse
  std::vector<std::uint32_t> pending_;  // faces that may still have outside points
  std::vector<std::uint32_t> created_;
  struct WalkFrame {
    std::uint32_t face;
    int first_edge;
    int step;
    int count;
  };
  std::vector<WalkFrame> walk_;

  static bool better(double d, std::uint32_t i, double best, std::uint32_t best_i) {
    return d > best || (d == best && i < best_i);
  }

  void set_plane(HullFace& f) const {
    const Point3& a = pts_[f.v[0]];
    const Point3& b = pts_[f.v[1]];
    const Point3& c = pts_[f.v[2]];
    Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    if (len > 0.0) n /= len;
    f.normal = n;
    f.offset = n.dot((a + b + c) / 3.0);
  }

  void assign(HullFace& f, std::uint32_t p, double d) {
    f.outside.push_back(p);
    if (better(d, p, f.eye_dist, f.eye)) {
      f.eye_dist = d;
      f.eye = p;
    }
  }

  void build_simplex() {
    const auto n = static_cast<std::uint32_t>(pts_.size());

    // Axis extremes, lowest index on ties.
    std::array<std::uint32_t, 6> ext{};
    for (int ax = 0; ax < 3; ++ax) {
      std::uint32_t lo = 0, hi = 0;
      for (std::uint32_t i = 1; i < n; ++i) {
        if (pts_[i][ax] < pts_[lo][ax]) lo = i;
        if (pts_[i][ax] > pts_[hi][ax]) hi = i;
      }
      ext[2 * ax] = lo;
      ext[2 * ax + 1] = hi;
    }
    std::uint32_t a = ext[0], b = ext[1];
    double best = -1.0;
    for (int i = 0; i < 6; ++i) {
      for (int j = i + 1; j < 6; ++j) {
        const double d = (pts_[ext[i]] - pts_[ext[j]]).squaredNorm();
        if (d > best) {
          best = d;
          a = std::min(ext[i], ext[j]);
          b = std::max(ext[i], ext[j]);
        }
      }
    }
    if (std::sqrt(best) <= eps_) throw DegeneracyError("quickhull: simplex stage 1 failed, all points coincident");

    const Vec3 ab = (pts_[b] - pts_[a]).normalized();
    std::uint32_t c = 0;
    best = -1.0;
    for (std::uint32_t i = 0; i < n; ++i) {
      const double d = (pts_[i] - pts_[a]).cross(ab).norm();
      if (d > best) {
        best = d;
        c = i;
      }
    }
    if (best <= eps_) throw DegeneracyError("quickhull: simplex stage 2 failed, points collinear");

    Vec3 pn = (pts_[b] - pts_[a]).cross(pts_[c] - pts_[a]).normalized();
    std::uint32_t d = 0;
    best = -1.0;
    for (std::uint32_t i = 0; i < n; ++i) {
      const double dist = std::abs(pn.dot(pts_[i] - pts_[a]));
      if (dist > best) {
        best = dist;
        d = i;
      }
    }
    if (best <= eps_) throw DegeneracyError("quickhull: simplex stage 3 failed, points coplanar");

    // Orient (a,b,c) away from d.
    if (pn.dot(pts_[d] - pts_[a]) > 0.0) std::swap(b, c);
    const std::array<Triangle, 4> tris{{{a, b, c}, {a, d, b}, {b, d, c}, {c, d, a}}};
    faces_.reserve(2 * static_cast<std::size_t>(n) + 16);
    for (const auto& t : tris) {
      HullFace f;
      f.v = t;
      set_plane(f);
      faces_.push_back(std::move(f));
    }
    // Adjacency by matching directed edges.
    for (std::uint32_t fi = 0; fi < 4; ++fi) {
      for (int e = 0; e < 3; ++e) {
        const auto u = faces_[fi].v[e], w = faces_[fi].v[(e + 1) % 3];
        for (std::uint32_t gi = 0; gi < 4; ++gi) {
          if (gi == fi) continue;
          if (edge_index(faces_[gi], w, u) >= 0) faces_[fi].adj[e] = gi;
        }
      }
    }

    for (std::uint32_t i = 0; i < n; ++i) {
      if (i == a || i == b || i == c || i == d) continue;
      std::uint32_t bf = 0;
      double bd = eps_;
      bool found = false;
      for (std::uint32_t fi = 0; fi < 4; ++fi) {
        const double dist = faces_[fi].distance(pts_[i]);
        if (dist > bd) {
          bd = dist;
          bf = fi;
          found = true;
        }
      }
      if (found) assign(faces_[bf], i, bd);
    }
  }

  static int edge_index(const HullFace& f, std::uint32_t from, std::uint32_t to) {
    for (int e = 0; e < 3; ++e) {
      if (f.v[e] == from && f.v[(e + 1) % 3] == to) return e;
    }
    return -1;
  }

  // Depth-first walk over faces visible from the eye point, emitting the
  // horizon as a counter-clockwise edge loop.
  void compute_horizon(const Point3& eye, std::uint32_t start) {
    visible_.clear();
    horizon_.clear();
    auto& stack = walk_;
    stack.clear();
    faces_[start].visible = true;
    visible_.push_back(start);
    stack.push_back({start, 0, 0, 3});
    while (!stack.empty()) {
      WalkFrame& fr = stack.back();
      if (fr.step == fr.count) {
        stack.pop_back();
        continue;
      }
      const int e = (fr.first_edge + fr.step) % 3;
      ++fr.step;
      const HullFace& f = faces_[fr.face];
      const std::uint32_t gi = f.adj[e];
      HullFace& g = faces_[gi];
      if (g.visible) continue;
      if (g.distance(eye) > eps_) {
        g.visible = true;
        visible_.push_back(gi);
        const int back = edge_index(g, f.v[(e + 1) % 3], f.v[e]);
        stack.push_back({gi, (back + 1) % 3, 0, 2});
      } else {
        horizon_.push_back({f.v[e], f.v[(e + 1) % 3], gi});
      }
    }
  }

  void add_point(std::uint32_t fi) {
    const std::uint32_t eye_idx = faces_[fi].eye;
    const Point3& eye = pts_[eye_idx];
    compute_horizon(eye, fi);

    const std::size_t h = horizon_.size();
    if (h < 3) throw DegeneracyError("quickhull: horizon stage failed, fewer than 3 edges");
    for (std::size_t i = 0; i < h; ++i) {
      if (horizon_[i].to != horizon_[(i + 1) % h].from) {
        throw DegeneracyError("quickhull: horizon stage failed, boundary is not a simple loop");
      }
    }

    // Gather orphaned points before faces_ may reallocate.
    auto& orphans = orphans_;
    orphans.clear();
    for (auto vi : visible_) {
      auto& vf = faces_[vi];
      vf.alive = false;
      orphans.insert(orphans.end(), vf.outside.begin(), vf.outside.end());
      vf.outside.clear();
    }

    created_.resize(h);
    for (std::size_t i = 0; i < h; ++i) {
      if (free_.empty()) {
        created_[i] = static_cast<std::uint32_t>(faces_.size());
        faces_.emplace_back();
      } else {
        created_[i] = free_.back();
        free_.pop_back();
        HullFace& f = faces_[created_[i]];
        f.outside.clear();
        f.eye = 0;
        f.eye_dist = -std::numeric_limits<double>::infinity();
        f.alive = true;
        f.visible = false;
      }
    }
    for (std::size_t i = 0; i < h; ++i) {
      const auto& he = horizon_[i];
      HullFace& nf = faces_[created_[i]];
      nf.v = {he.from, he.to, eye_idx};
      nf.adj[0] = he.face;
      nf.adj[1] = created_[(i + 1) % h];
      nf.adj[2] = created_[(i + h - 1) % h];
      set_plane(nf);
      HullFace& other = faces_[he.face];
      const int e = edge_index(other, he.to, he.from);
      other.adj[e] = created_[i];
    }
    // Visible faces die only now so their slots are not handed out above.
    free_.insert(free_.end(), visible_.begin(), visible_.end());

    for (auto p : orphans) {
      if (p == eye_idx) continue;
      double bd = eps_;
      std::uint32_t bf = 0;
      bool found = false;
      for (std::size_t k = 0; k < h; ++k) {
        const double d = faces_[created_[k]].distance(pts_[p]);
        if (d > bd) {
          bd = d;
          bf = created_[k];
          found = true;
        }
      }
      if (found) assign(faces_[bf], p, bd);
    }
    for (std::size_t k = h; k-- > 0;) {
      if (!faces_[created_[k]].outside.empty()) pending_.push_back(created_[k]);
    }
  }

  HullMesh collect() const {
    HullMesh out;
    std::vector<char> on_hull(pts_.size(), 0);
    for (const auto& f : faces_) {
      if (!f.alive) continue;
      out.faces.push_back(f.v);
      out.face_normals.push_back(f.normal);
      for (auto v : f.v) on_hull[v] = 1;
    }
    for (std::size_t i = 0; i < on_hull.size(); ++i) {
      if (on_hull[i]) out.vertex_indices.push_back(static_cast<std::uint32_t>(i));
    }
    return out;
  }
};

}  // namespace detail

/// Convex hull of `points`. Throws DegeneracyError naming the failed stage
/// when the input is coincident, collinear or coplanar within `eps`.
inline HullMesh quickhull(std::span<const Point3> points, double eps) {
  return detail::QuickHull(points, eps).run();
}

inline HullMesh quickhull(std::span<const Point3> points) {
  return quickhull(points, default_hull_epsilon(points));
}

/// Volume enclosed by a hull: sum of signed tetrahedra against the centroid
/// of the hull vertices.
inline double hull_volume(const HullMesh& h, std::span<const Point3> points) {
  Point3 ref = Point3::Zero();
  for (auto i : h.vertex_indices) ref += points[i];
  if (!h.vertex_indices.empty()) ref /= static_cast<double>(h.vertex_indices.size());
  double vol = 0.0;
  for (const auto& f : h.faces) {
    const Vec3 a = points[f[0]] - ref, b = points[f[1]] - ref, c = points[f[2]] - ref;
    vol += a.dot(b.cross(c));
  }
  return vol / 6.0;
}

/// Number of undirected edges; each must be shared by exactly two faces for
/// a closed surface. Returns false and leaves `edges` partial otherwise.
inline bool closed_manifold(std::span<const Triangle> faces, std::size_t* edge_count = nullptr) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const auto& f : faces) {
    for (int e = 0; e < 3; ++e) {
      const auto key = std::make_pair(f[e], f[(e + 1) % 3]);
      if (++directed[key] > 1) return false;
    }
  }
  for (const auto& [key, count] : directed) {
    if (directed.find({key.second, key.first}) == directed.end()) return false;
  }
  if (edge_count) *edge_count = directed.size() / 2;
  return true;
}

}  // namespace losmap
