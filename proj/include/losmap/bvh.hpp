#pragma once

// Bounding-volume hierarchy over triangles for nearest-hit ray queries.
// Binned SAH build, flat node array, iterative traversal. Hits are resolved
// by smallest distance, then by lowest face id, so results match a brute
// force scan exactly.

#include "losmap/types.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace losmap {

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  std::uint32_t face = std::numeric_limits<std::uint32_t>::max();

  bool better_than(const RayHit& o) const { return t < o.t || (t == o.t && face < o.face); }
};

/// Moller-Trumbore. Returns the ray parameter of a hit with t > t_min.
inline std::optional<double> ray_triangle(const Point3& o, const Vec3& d, const Point3& a, const Point3& b,
                                          const Point3& c, double t_min = 0.0) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = d.cross(e2);
  const double det = e1.dot(p);
  if (det == 0.0) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = o - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = d.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (!(t > t_min)) return std::nullopt;
  return t;
}

struct Aabb {
  Point3 lo = Point3::Constant(std::numeric_limits<double>::infinity());
  Point3 hi = Point3::Constant(-std::numeric_limits<double>::infinity());

  void grow(const Point3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void grow(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  double area() const {
    const Vec3 e = (hi - lo).cwiseMax(0.0);
    return 2.0 * (e.x() * e.y() + e.y() * e.z() + e.z() * e.x());
  }
  Point3 center() const { return 0.5 * (lo + hi); }
};

class Bvh {
 public:
  Bvh() = default;

  /// `faces` index into `vertices`; `face_ids[i]` is the id reported for
  /// faces[i] (defaults to i).
  Bvh(std::span<const Point3> vertices, std::span<const std::array<std::uint32_t, 3>> faces,
      std::span<const std::uint32_t> face_ids = {}) {
    tris_.reserve(faces.size());
    for (std::size_t i = 0; i < faces.size(); ++i) {
      Tri t;
      for (int k = 0; k < 3; ++k) t.v[k] = vertices[faces[i][static_cast<std::size_t>(k)]];
      t.id = face_ids.empty() ? static_cast<std::uint32_t>(i) : face_ids[i];
      tris_.push_back(t);
    }
    build();
  }

  std::size_t size() const { return tris_.size(); }
  bool empty() const { return tris_.empty(); }
  std::size_t node_count() const { return nodes_.size(); }

  /// Nearest hit along o + t d with t > t_min, or nullopt on a miss.
  /// `seed`, when given, must be an actual hit of this ray (for example the
  /// answer for a neighbouring ray re-tested on this one); it only tightens
  /// pruning and never changes the result.
  std::optional<RayHit> intersect(const Point3& o, const Vec3& d, double t_min = 0.0,
                                  const RayHit* seed = nullptr) const {
    if (nodes_.empty()) return std::nullopt;
    RayHit best;
    if (seed) best = *seed;
    const Vec3 inv(1.0 / d.x(), 1.0 / d.y(), 1.0 / d.z());
    struct Entry {
      std::uint32_t node;
      double t;
    };
    Entry stack[kMaxDepth + 2];
    int sp = 0;
    double t_root = 0.0;
    if (!slab(nodes_[0].box, o, inv, best.t, t_root)) return seed ? std::optional<RayHit>(best) : std::nullopt;
    stack[sp++] = {0, t_root};
    while (sp > 0) {
      const Entry e = stack[--sp];
      if (e.t > best.t) continue;
      const Node& n = nodes_[e.node];
      if (n.count > 0) {
        for (std::uint32_t i = n.first; i < n.first + n.count; ++i) {
          const Tri& tr = tris_[i];
          if (auto t = ray_triangle(o, d, tr.v[0], tr.v[1], tr.v[2], t_min)) {
            const RayHit h{*t, tr.id};
            if (h.better_than(best)) best = h;
          }
        }
        continue;
      }
      // Visit the nearer child first.
      const std::uint32_t a = n.first, b = n.first + 1;
      double ta = 0.0, tb = 0.0;
      const bool ha = slab(nodes_[a].box, o, inv, best.t, ta);
      const bool hb = slab(nodes_[b].box, o, inv, best.t, tb);
      if (ha && hb) {
        if (ta <= tb) {
          stack[sp++] = {b, tb};
          stack[sp++] = {a, ta};
        } else {
          stack[sp++] = {a, ta};
          stack[sp++] = {b, tb};
        }
      } else if (ha) {
        stack[sp++] = {a, ta};
      } else if (hb) {
        stack[sp++] = {b, tb};
      }
    }
    if (!std::isfinite(best.t)) return std::nullopt;
    return best;
  }

 private:
  struct Tri {
    std::array<Point3, 3> v;
    std::uint32_t id = 0;
    Aabb box() const {
      Aabb b;
      for (const auto& p : v) b.grow(p);
      return b;
    }
  };
  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // leaf: first triangle; inner: left child (right = first + 1)
    std::uint32_t count = 0;  // > 0 for leaves
  };

  static constexpr int kBins = 12;
  static constexpr std::uint32_t kLeafSize = 4;
  static constexpr std::uint32_t kMaxDepth = 96;
  static constexpr std::uint32_t kAllAxesBelow = 256;

  // Inclusive slab test; boxes are padded at build time so rays grazing an
  // edge still enter. Prunes boxes entered strictly after `t_max`.
  static bool slab(const Aabb& b, const Point3& o, const Vec3& inv, double t_max, double& t_enter) {
    double t0 = 0.0, t1 = t_max;
    for (int a = 0; a < 3; ++a) {
      double lo = (b.lo[a] - o[a]) * inv[a];
      double hi = (b.hi[a] - o[a]) * inv[a];
      if (std::isnan(lo) || std::isnan(hi)) {
        // Ray parallel to the slab with origin on its plane.
        if (o[a] < b.lo[a] || o[a] > b.hi[a]) return false;
        continue;
      }
      if (lo > hi) std::swap(lo, hi);
      t0 = std::max(t0, lo);
      t1 = std::min(t1, hi);
      if (t0 > t1) return false;
    }
    t_enter = t0;
    return true;
  }

  struct Bounds {
    Aabb box;   // triangle bounds
    Aabb cbox;  // centroid bounds
  };

  void build() {
    if (tris_.empty()) return;
    boxes_.resize(tris_.size());
    centers_.resize(tris_.size());
    Bounds all;
    for (std::size_t i = 0; i < tris_.size(); ++i) {
      boxes_[i] = tris_[i].box();
      centers_[i] = boxes_[i].center();
      all.box.grow(boxes_[i]);
      all.cbox.grow(centers_[i]);
    }
    order_.resize(tris_.size());
    for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
    nodes_.reserve(2 * tris_.size());
    nodes_.push_back({});
    struct Task {
      std::uint32_t node, first, count, depth;
      Bounds bounds;
    };
    std::vector<Task> work{{0, 0, static_cast<std::uint32_t>(tris_.size()), 0, all}};
    while (!work.empty()) {
      const Task task = work.back();
      work.pop_back();
      Aabb box = task.bounds.box;
      const double pad = 1e-9 * std::max(1.0, (box.hi - box.lo).norm());
      box.lo.array() -= pad;
      box.hi.array() += pad;
      nodes_[task.node].box = box;
      std::uint32_t mid = 0;
      Bounds lb, rb;
      if (task.count <= kLeafSize || task.depth >= kMaxDepth ||
          !split(task.first, task.count, task.bounds, mid, lb, rb)) {
        nodes_[task.node].first = task.first;
        nodes_[task.node].count = task.count;
        continue;
      }
      const auto left = static_cast<std::uint32_t>(nodes_.size());
      nodes_.push_back({});
      nodes_.push_back({});
      nodes_[task.node].first = left;
      nodes_[task.node].count = 0;
      work.push_back({left + 1, mid, task.first + task.count - mid, task.depth + 1, rb});
      work.push_back({left, task.first, mid - task.first, task.depth + 1, lb});
    }
    std::vector<Tri> sorted(tris_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) sorted[i] = tris_[order_[i]];
    tris_ = std::move(sorted);
    boxes_.clear();
    boxes_.shrink_to_fit();
    centers_.clear();
    centers_.shrink_to_fit();
    order_.clear();
    order_.shrink_to_fit();
  }

  // Binned SAH split of order_[first, first+count), all three axes binned in
  // one pass. Returns false when no split beats a leaf; otherwise fills the
  // children's bounds.
  bool split(std::uint32_t first, std::uint32_t count, const Bounds& node, std::uint32_t& mid, Bounds& lb, Bounds& rb) {
    struct Bin {
      Bounds b;
      std::uint32_t n = 0;
    };
    std::array<std::array<Bin, kBins>, 3> bins;
    std::array<double, 3> lo{}, scale{};
    std::array<bool, 3> usable{};
    // Large nodes are binned along their longest centroid axis only.
    int longest = 0;
    (node.cbox.hi - node.cbox.lo).maxCoeff(&longest);
    for (int a = 0; a < 3; ++a) {
      lo[static_cast<std::size_t>(a)] = node.cbox.lo[a];
      const double ext = node.cbox.hi[a] - node.cbox.lo[a];
      usable[static_cast<std::size_t>(a)] = ext > 0.0 && (count <= kAllAxesBelow || a == longest);
      scale[static_cast<std::size_t>(a)] = ext > 0.0 ? kBins / ext : 0.0;
    }
    auto bin_of = [&](const Point3& c, int a) {
      const auto ua = static_cast<std::size_t>(a);
      return std::min(kBins - 1, static_cast<int>((c[a] - lo[ua]) * scale[ua]));
    };
    for (std::uint32_t i = first; i < first + count; ++i) {
      const std::uint32_t t = order_[i];
      const Aabb& bx = boxes_[t];
      const Point3& c = centers_[t];
      for (int a = 0; a < 3; ++a) {
        if (!usable[static_cast<std::size_t>(a)]) continue;
        Bin& bin = bins[static_cast<std::size_t>(a)][static_cast<std::size_t>(bin_of(c, a))];
        bin.b.box.grow(bx);
        bin.b.cbox.grow(c);
        ++bin.n;
      }
    }
    double best_cost = std::numeric_limits<double>::infinity();
    int best_axis = -1, best_bin = -1;
    for (int a = 0; a < 3; ++a) {
      if (!usable[static_cast<std::size_t>(a)]) continue;
      const auto& ab = bins[static_cast<std::size_t>(a)];
      std::array<double, kBins> right_area{};
      std::array<std::uint32_t, kBins> right_count{};
      Aabb acc;
      std::uint32_t n = 0;
      for (int b = kBins - 1; b > 0; --b) {
        acc.grow(ab[static_cast<std::size_t>(b)].b.box);
        n += ab[static_cast<std::size_t>(b)].n;
        right_area[static_cast<std::size_t>(b)] = acc.area();
        right_count[static_cast<std::size_t>(b)] = n;
      }
      Aabb left;
      std::uint32_t nl = 0;
      for (int b = 0; b < kBins - 1; ++b) {
        left.grow(ab[static_cast<std::size_t>(b)].b.box);
        nl += ab[static_cast<std::size_t>(b)].n;
        const auto ub = static_cast<std::size_t>(b + 1);
        if (nl == 0 || right_count[ub] == 0) continue;
        const double cost = nl * left.area() + right_count[ub] * right_area[ub];
        if (cost < best_cost) {
          best_cost = cost;
          best_axis = a;
          best_bin = b;
        }
      }
    }
    if (best_axis < 0) return false;
    const double leaf_cost = count * node.box.area();
    if (best_cost >= leaf_cost && count <= 16) return false;
    lb = {};
    rb = {};
    const auto& ab = bins[static_cast<std::size_t>(best_axis)];
    for (int b = 0; b < kBins; ++b) {
      Bounds& dst = b <= best_bin ? lb : rb;
      dst.box.grow(ab[static_cast<std::size_t>(b)].b.box);
      dst.cbox.grow(ab[static_cast<std::size_t>(b)].b.cbox);
    }
    auto it = std::partition(order_.begin() + first, order_.begin() + first + count,
                             [&](std::uint32_t i) { return bin_of(centers_[i], best_axis) <= best_bin; });
    mid = static_cast<std::uint32_t>(it - order_.begin());
    return mid > first && mid < first + count;
  }

  std::vector<Tri> tris_;
  std::vector<Node> nodes_;
  std::vector<Aabb> boxes_;
  std::vector<Point3> centers_;
  std::vector<std::uint32_t> order_;
};

/// Linear scan over every triangle: reference for the hierarchy.
inline std::optional<RayHit> brute_force_nearest(std::span<const Point3> vertices,
                                                 std::span<const std::array<std::uint32_t, 3>> faces, const Point3& o,
                                                 const Vec3& d, double t_min = 0.0) {
  RayHit best;
  for (std::size_t i = 0; i < faces.size(); ++i) {
    const auto& f = faces[i];
    if (auto t = ray_triangle(o, d, vertices[f[0]], vertices[f[1]], vertices[f[2]], t_min)) {
      const RayHit h{*t, static_cast<std::uint32_t>(i)};
      if (h.better_than(best)) best = h;
    }
  }
  if (!std::isfinite(best.t)) return std::nullopt;
  return best;
}

}  // namespace losmap
