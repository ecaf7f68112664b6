#pragma once

// Static scene reconstruction: static points and their normals are fused into
// a sparse voxel SDF (signed distance to each voxel's mean plane), and the
// zero level set is extracted with marching cubes.

#include "losmap/frame_mesh.hpp"
#include "losmap/los_field.hpp"
#include "losmap/mesh_io.hpp"
#include "losmap/types.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace losmap {

struct TsdfParams {
  double l_vox = 0.5;
  double truncation = 0.0;  // 0 means 1.5 * l_vox
  double update_radius = 30.0;

  double tau() const { return truncation > 0.0 ? truncation : 1.5 * l_vox; }

  void validate() const {
    if (!(l_vox > 0.0)) throw DomainError("l_vox must be > 0");
    if (truncation < 0.0) throw DomainError("truncation must be >= 0");
    if (!(update_radius > 0.0)) throw DomainError("update_radius must be > 0");
  }
};

struct TsdfVoxel {
  double sdf = 0.0;
  double weight = 0.0;
  std::uint32_t point_count = 0;
  Vec3 point_sum = Vec3::Zero();
  Vec3 normal_sum = Vec3::Zero();
  std::uint64_t pass = 0;  // last integrate() call that touched this voxel

  Point3 mean_point() const { return point_count ? Point3(point_sum / point_count) : Point3::Zero(); }

  Vec3 mean_normal() const {
    const double n = normal_sum.norm();
    return n > 0.0 ? Vec3(normal_sum / n) : Vec3::Zero();
  }
};

class TsdfGrid {
 public:
  explicit TsdfGrid(double l_vox = 0.5, double tau = 0.75) : l_vox_(l_vox), tau_(tau) {
    if (!(l_vox > 0.0)) throw DomainError("l_vox must be > 0");
    if (!(tau > 0.0)) throw DomainError("truncation must be > 0");
  }

  explicit TsdfGrid(const TsdfParams& p) : TsdfGrid(p.l_vox, p.tau()) {}

  double l_vox() const { return l_vox_; }
  double tau() const { return tau_; }
  std::size_t size() const { return voxels_.size(); }
  bool empty() const { return voxels_.empty(); }

  const TsdfVoxel* find(const VoxelKey& k) const {
    auto it = voxels_.find(k);
    return it == voxels_.end() ? nullptr : &it->second;
  }

  TsdfVoxel& at(const VoxelKey& k) { return voxels_[k]; }

  std::uint64_t next_pass() { return ++pass_; }

  /// Write an SDF sample directly (analytic grids in tests and reloads).
  void set_sdf(const VoxelKey& k, double sdf, double weight = 1.0) {
    auto& v = voxels_[k];
    v.sdf = std::clamp(sdf, -tau_, tau_);
    v.weight = weight;
  }

  const std::unordered_map<VoxelKey, TsdfVoxel, VoxelKeyHash>& voxels() const { return voxels_; }

  std::vector<VoxelKey> sorted_keys() const {
    std::vector<VoxelKey> keys;
    keys.reserve(voxels_.size());
    for (const auto& [k, v] : voxels_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    return keys;
  }

  bool operator==(const TsdfGrid& o) const {
    if (l_vox_ != o.l_vox_ || tau_ != o.tau_ || voxels_.size() != o.voxels_.size()) return false;
    for (const auto& [k, v] : voxels_) {
      const TsdfVoxel* w = o.find(k);
      if (!w || w->sdf != v.sdf || w->weight != v.weight || w->point_count != v.point_count ||
          w->point_sum != v.point_sum || w->normal_sum != v.normal_sum) {
        return false;
      }
    }
    return true;
  }

 private:
  double l_vox_;
  double tau_;
  std::uint64_t pass_ = 0;
  std::unordered_map<VoxelKey, TsdfVoxel, VoxelKeyHash> voxels_;
};

/// Fold one frame's static points into the grid. Points labeled dynamic,
/// points with invalid normals and points beyond `update_radius` from the
/// sensor are skipped. Each remaining point joins the running means of every
/// voxel whose center lies within the truncation distance of it; touched
/// voxels then get sdf = clamp(mean_normal . (center - mean_point)).
inline void integrate(TsdfGrid& grid, const ScanFrame& frame, std::span<const Vec3> local_normals,
                      std::span<const std::uint8_t> normal_valid, const DynamicMask* mask, double update_radius) {
  const std::size_t n = frame.points.size();
  if (local_normals.size() != n || normal_valid.size() != n) throw DomainError("normals do not match frame size");
  if (mask && mask->labels.size() != n) throw DomainError("mask does not match frame size");
  const double l = grid.l_vox();
  const double tau = grid.tau();
  const int reach = static_cast<int>(std::ceil(tau / l)) + 1;
  const Eigen::Matrix3d rot = frame.pose.rotation();
  std::vector<VoxelKey> touched;
  const std::uint64_t pass = grid.next_pass();
  for (std::size_t i = 0; i < n; ++i) {
    if (!normal_valid[i]) continue;
    if (mask && mask->labels[i] == PointLabel::dynamic_point) continue;
    if (frame.points[i].norm() > update_radius) continue;
    const Point3 p = to_world(frame.pose, frame.points[i]);
    const Vec3 nrm = rot * local_normals[i];
    const VoxelKey base = voxel_key(p, l);
    for (int dz = -reach; dz <= reach; ++dz) {
      for (int dy = -reach; dy <= reach; ++dy) {
        for (int dx = -reach; dx <= reach; ++dx) {
          const VoxelKey k{base.x + dx, base.y + dy, base.z + dz};
          if ((voxel_center(k, l) - p).norm() > tau) continue;
          TsdfVoxel& v = grid.at(k);
          if (v.pass != pass) {
            v.pass = pass;
            touched.push_back(k);
          }
          ++v.point_count;
          v.point_sum += p;
          v.normal_sum += nrm;
          v.weight += 1.0;
        }
      }
    }
  }
  for (const auto& k : touched) {
    TsdfVoxel& v = grid.at(k);
    const Vec3 nbar = v.mean_normal();
    v.sdf = nbar.isZero() ? tau : std::clamp(nbar.dot(voxel_center(k, l) - v.mean_point()), -tau, tau);
  }
}

inline void integrate(TsdfGrid& grid, const FrameMesh& mesh, const ScanFrame& frame, const DynamicMask* mask,
                      double update_radius) {
  integrate(grid, frame, mesh.point_normals, mesh.normal_valid, mask, update_radius);
}

// ---------------------------------------------------------------------------
// Marching cubes
// ---------------------------------------------------------------------------

namespace detail {

// Corner c of a cell sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
inline std::array<int, 3> corner_offset(int c) { return {c & 1, (c >> 1) & 1, (c >> 2) & 1}; }

struct CubeEdges {
  std::array<std::array<int, 2>, 12> corners{};  // lower corner first
  std::array<int, 12> axis{};
};

inline const CubeEdges& cube_edges() {
  static const CubeEdges e = [] {
    CubeEdges out;
    int n = 0;
    for (int axis = 0; axis < 3; ++axis) {
      for (int c = 0; c < 8; ++c) {
        if (c & (1 << axis)) continue;
        out.corners[static_cast<std::size_t>(n)] = {c, c | (1 << axis)};
        out.axis[static_cast<std::size_t>(n)] = axis;
        ++n;
      }
    }
    return out;
  }();
  return e;
}

inline int edge_between(int a, int b) {
  const auto& e = cube_edges();
  for (int i = 0; i < 12; ++i) {
    const auto& c = e.corners[static_cast<std::size_t>(i)];
    if ((c[0] == a && c[1] == b) || (c[0] == b && c[1] == a)) return i;
  }
  return -1;
}

/// Triangles (as edge triples) for each of the 256 sign patterns, where bit c
/// set means corner c is negative. On a face whose corners alternate in sign,
/// each negative corner is cut off on its own, so the positive side stays
/// connected across the face; the rule depends only on the face, so
/// neighbouring cells agree and the surface has no cracks. Triangles are
/// wound so their normal points toward the positive side.
inline const std::array<std::vector<std::array<int, 3>>, 256>& cube_cases() {
  static const auto table = [] {
    std::array<std::vector<std::array<int, 3>>, 256> out;
    // Faces as cycles of corners.
    std::vector<std::array<int, 4>> faces;
    for (int axis = 0; axis < 3; ++axis) {
      const int b = 1 << ((axis + 1) % 3), c = 1 << ((axis + 2) % 3);
      for (int side = 0; side < 2; ++side) {
        const int o = side ? (1 << axis) : 0;
        faces.push_back({o, o | b, o | b | c, o | c});
      }
    }
    auto mid = [](int e) {
      const auto& ce = cube_edges().corners[static_cast<std::size_t>(e)];
      const auto a = corner_offset(ce[0]), b = corner_offset(ce[1]);
      return Vec3(0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2]));
    };
    for (int mask = 1; mask < 255; ++mask) {
      auto neg = [&](int corner) { return (mask >> corner) & 1; };
      std::array<std::vector<int>, 12> link;
      for (const auto& f : faces) {
        std::array<int, 4> crossing{};
        int count = 0;
        for (int i = 0; i < 4; ++i) {
          const int a = f[static_cast<std::size_t>(i)], b = f[static_cast<std::size_t>((i + 1) % 4)];
          crossing[static_cast<std::size_t>(i)] = neg(a) != neg(b) ? edge_between(a, b) : -1;
          count += neg(a) != neg(b);
        }
        auto connect = [&](int e0, int e1) {
          link[static_cast<std::size_t>(e0)].push_back(e1);
          link[static_cast<std::size_t>(e1)].push_back(e0);
        };
        if (count == 2) {
          int first = -1;
          for (int i = 0; i < 4; ++i) {
            const int e = crossing[static_cast<std::size_t>(i)];
            if (e < 0) continue;
            if (first < 0) first = e;
            else connect(first, e);
          }
        } else if (count == 4) {
          for (int i = 0; i < 4; ++i) {
            if (!neg(f[static_cast<std::size_t>(i)])) continue;
            connect(crossing[static_cast<std::size_t>((i + 3) % 4)], crossing[static_cast<std::size_t>(i)]);
          }
        }
      }
      std::array<bool, 12> used{};
      for (int start = 0; start < 12; ++start) {
        if (used[static_cast<std::size_t>(start)] || link[static_cast<std::size_t>(start)].empty()) continue;
        std::vector<int> loop{start};
        used[static_cast<std::size_t>(start)] = true;
        int prev = -1, cur = start;
        while (true) {
          const auto& nb = link[static_cast<std::size_t>(cur)];
          const int next = nb[0] != prev ? nb[0] : nb[1];
          if (next == start) break;
          loop.push_back(next);
          used[static_cast<std::size_t>(next)] = true;
          prev = cur;
          cur = next;
        }
        // Orient toward the positive corners.
        Vec3 newell = Vec3::Zero(), toward_pos = Vec3::Zero();
        for (std::size_t i = 0; i < loop.size(); ++i) {
          newell += mid(loop[i]).cross(mid(loop[(i + 1) % loop.size()]));
          const auto& ce = cube_edges().corners[static_cast<std::size_t>(loop[i])];
          const auto a = corner_offset(ce[0]), b = corner_offset(ce[1]);
          const Vec3 ab(b[0] - a[0], b[1] - a[1], b[2] - a[2]);
          toward_pos += neg(ce[0]) ? ab : Vec3(-ab);
        }
        if (newell.dot(toward_pos) < 0.0) std::reverse(loop.begin(), loop.end());
        for (std::size_t i = 1; i + 1 < loop.size(); ++i) {
          out[static_cast<std::size_t>(mask)].push_back({loop[0], loop[i], loop[i + 1]});
        }
      }
    }
    return out;
  }();
  return table;
}

struct EdgeKey {
  VoxelKey lower;
  int axis;
  friend bool operator==(const EdgeKey&, const EdgeKey&) = default;
};

struct EdgeKeyHash {
  std::size_t operator()(const EdgeKey& e) const { return VoxelKeyHash{}(e.lower) * 3 + static_cast<std::size_t>(e.axis); }
};

}  // namespace detail

/// Marching cubes over the lattice of voxel centers. A cell is polygonized
/// only when all 8 corner voxels carry weight > 0. Vertices on shared edges
/// are merged; triangles with area <= 1e-12 m^2 are dropped. Vertex normals
/// are area-weighted face normals.
inline TriangleMesh extract_mesh(const TsdfGrid& grid) {
  const double l = grid.l_vox();
  const auto keys = grid.sorted_keys();
  const auto& cases = detail::cube_cases();
  const auto& edges = detail::cube_edges();

  struct CellTri {
    std::array<detail::EdgeKey, 3> edge;
    std::array<Point3, 3> p;
  };
  std::vector<std::vector<CellTri>> per_cell(keys.size());
  const auto nk = static_cast<std::int64_t>(keys.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t ci = 0; ci < nk; ++ci) {
    const VoxelKey base = keys[static_cast<std::size_t>(ci)];
    std::array<double, 8> val{};
    bool complete = true;
    int mask = 0;
    for (int c = 0; c < 8 && complete; ++c) {
      const auto o = detail::corner_offset(c);
      const TsdfVoxel* v = grid.find({base.x + o[0], base.y + o[1], base.z + o[2]});
      if (!v || !(v->weight > 0.0)) complete = false;
      else {
        val[static_cast<std::size_t>(c)] = v->sdf;
        if (v->sdf < 0.0) mask |= 1 << c;
      }
    }
    if (!complete || mask == 0 || mask == 255) continue;
    auto vertex = [&](int e) {
      const auto& ce = edges.corners[static_cast<std::size_t>(e)];
      const double a = val[static_cast<std::size_t>(ce[0])], b = val[static_cast<std::size_t>(ce[1])];
      const double t = a / (a - b);
      const auto o = detail::corner_offset(ce[0]);
      const VoxelKey lower{base.x + o[0], base.y + o[1], base.z + o[2]};
      Point3 p = voxel_center(lower, l);
      p[edges.axis[static_cast<std::size_t>(e)]] += t * l;
      return std::pair{detail::EdgeKey{lower, edges.axis[static_cast<std::size_t>(e)]}, p};
    };
    auto& out = per_cell[static_cast<std::size_t>(ci)];
    for (const auto& tri : cases[static_cast<std::size_t>(mask)]) {
      CellTri ct;
      for (int k = 0; k < 3; ++k) {
        auto [key, p] = vertex(tri[static_cast<std::size_t>(k)]);
        ct.edge[static_cast<std::size_t>(k)] = key;
        ct.p[static_cast<std::size_t>(k)] = p;
      }
      if (0.5 * (ct.p[1] - ct.p[0]).cross(ct.p[2] - ct.p[0]).norm() <= 1e-12) continue;
      out.push_back(ct);
    }
  }

  TriangleMesh mesh;
  std::unordered_map<detail::EdgeKey, std::uint32_t, detail::EdgeKeyHash> index;
  for (const auto& cell : per_cell) {
    for (const auto& ct : cell) {
      Triangle t{};
      for (std::size_t k = 0; k < 3; ++k) {
        auto [it, fresh] = index.try_emplace(ct.edge[k], static_cast<std::uint32_t>(mesh.vertices.size()));
        if (fresh) mesh.vertices.push_back(ct.p[k]);
        t[k] = it->second;
      }
      mesh.faces.push_back(t);
    }
  }
  mesh.normals.assign(mesh.vertices.size(), Vec3::Zero());
  for (const auto& t : mesh.faces) {
    const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
    for (auto v : t) mesh.normals[v] += n;
  }
  for (auto& n : mesh.normals) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
  return mesh;
}

/// Rows "i,j,k,sdf,weight" in ascending key order.
inline void export_grid_csv(const TsdfGrid& grid, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(path + ": cannot open for writing");
  std::fprintf(f, "i,j,k,sdf,weight\n");
  for (const auto& k : grid.sorted_keys()) {
    const TsdfVoxel* v = grid.find(k);
    std::fprintf(f, "%d,%d,%d,%.17g,%.17g\n", k.x, k.y, k.z, v->sdf, v->weight);
  }
  const bool ok = std::ferror(f) == 0;
  std::fclose(f);
  if (!ok) throw Error(path + ": write failed");
}

}  // namespace losmap
