#pragma once

// Voxel line-of-sight distance field.
//
// For a frame, every voxel center q within the update radius is probed with
// a ray from the sensor through q. If the ray hits the frame mesh at j, the
// sample is |s - j| - |s - q|, floored at -l_vox/2. Rays that miss leave the
// voxel untouched. Samples are fused into a running weighted mean per voxel.

#include "losmap/bvh.hpp"
#include "losmap/frame_mesh.hpp"
#include "losmap/types.hpp"

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace losmap {

struct FieldParams {
  double l_vox = 0.5;
  double update_radius = 30.0;
  double w_prev = 1.0;
  double w_new = 1.0;

  void validate() const {
    if (!(l_vox > 0.0)) throw DomainError("l_vox must be > 0");
    if (!(update_radius > l_vox)) throw DomainError("update_radius must exceed l_vox");
    if (!(w_prev > 0.0) || !(w_new > 0.0)) throw DomainError("fusion weights must be > 0");
  }
};

// ---------------------------------------------------------------------------
// Voxel keys
// ---------------------------------------------------------------------------

struct VoxelKey {
  std::int32_t x = 0, y = 0, z = 0;

  friend bool operator==(const VoxelKey&, const VoxelKey&) = default;
  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = static_cast<std::uint32_t>(k.x);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(k.y);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(k.z);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

inline VoxelKey voxel_key(const Point3& p, double l_vox) {
  return {static_cast<std::int32_t>(std::floor(p.x() / l_vox)), static_cast<std::int32_t>(std::floor(p.y() / l_vox)),
          static_cast<std::int32_t>(std::floor(p.z() / l_vox))};
}

inline Point3 voxel_center(const VoxelKey& k, double l_vox) {
  return {(k.x + 0.5) * l_vox, (k.y + 0.5) * l_vox, (k.z + 0.5) * l_vox};
}

// ---------------------------------------------------------------------------
// Field storage: 8^3 voxel blocks in a hash map.
// ---------------------------------------------------------------------------

struct VoxelRecord {
  double D = 0.0;
  double W = 0.0;
  std::int64_t last_frame = -1;
};

class LoSField {
 public:
  static constexpr int kBlockShift = 3;
  static constexpr int kBlockSide = 1 << kBlockShift;
  static constexpr int kBlockVoxels = kBlockSide * kBlockSide * kBlockSide;

  struct Block {
    std::array<double, kBlockVoxels> D{};
    std::array<double, kBlockVoxels> W{};  // 0 means never observed
    std::array<std::int64_t, kBlockVoxels> last{};
  };

  explicit LoSField(double l_vox = 0.5) : l_vox_(l_vox) {
    if (!(l_vox > 0.0)) throw DomainError("l_vox must be > 0");
  }

  double l_vox() const { return l_vox_; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }

  static VoxelKey block_of(const VoxelKey& k) { return {k.x >> kBlockShift, k.y >> kBlockShift, k.z >> kBlockShift}; }
  static int slot_of(const VoxelKey& k) {
    const int m = kBlockSide - 1;
    return ((k.z & m) * kBlockSide + (k.y & m)) * kBlockSide + (k.x & m);
  }

  std::optional<VoxelRecord> find(const VoxelKey& k) const {
    auto it = blocks_.find(block_of(k));
    if (it == blocks_.end()) return std::nullopt;
    const int s = slot_of(k);
    const auto us = static_cast<std::size_t>(s);
    if (it->second->W[us] <= 0.0) return std::nullopt;
    return VoxelRecord{it->second->D[us], it->second->W[us], it->second->last[us]};
  }

  std::optional<VoxelRecord> find(const Point3& p) const { return find(voxel_key(p, l_vox_)); }

  /// Overwrite a voxel (used by reload and tests). W must be > 0.
  void set(const VoxelKey& k, const VoxelRecord& r) {
    if (!(r.W > 0.0)) throw DomainError("voxel weight must be > 0");
    Block& b = block(block_of(k));
    const auto s = static_cast<std::size_t>(slot_of(k));
    if (b.W[s] <= 0.0) ++count_;
    b.D[s] = r.D;
    b.W[s] = r.W;
    b.last[s] = r.last_frame;
  }

  /// Fold one observation into a voxel.
  void fuse(const VoxelKey& k, double d, std::int64_t frame_id, double w_prev = 1.0, double w_new = 1.0) {
    Block& b = block(block_of(k));
    const auto s = static_cast<std::size_t>(slot_of(k));
    if (b.W[s] <= 0.0) ++count_;
    fuse_slot(b, s, d, frame_id, w_prev, w_new);
  }

  /// Running weighted mean in incremental form: repeated identical samples
  /// leave D bit-identical.
  static void fuse_slot(Block& b, std::size_t s, double d, std::int64_t frame_id, double w_prev, double w_new) {
    if (b.W[s] <= 0.0) {
      b.D[s] = d;
      b.W[s] = w_new;
    } else {
      const double w = w_prev * b.W[s];
      b.D[s] += w_new * (d - b.D[s]) / (w + w_new);
      b.W[s] = w + w_new;
    }
    b.last[s] = frame_id;
  }

  Block& block(const VoxelKey& bk) {
    auto& p = blocks_[bk];
    if (!p) p = std::make_unique<Block>();
    return *p;
  }

  const std::unordered_map<VoxelKey, std::unique_ptr<Block>, VoxelKeyHash>& blocks() const { return blocks_; }

  void note_new_voxels(std::size_t n) { count_ += n; }

  /// Every stored voxel in ascending key order.
  std::vector<std::pair<VoxelKey, VoxelRecord>> sorted_voxels() const {
    std::vector<std::pair<VoxelKey, VoxelRecord>> out;
    out.reserve(count_);
    for (const auto& [bk, b] : blocks_) {
      for (int s = 0; s < kBlockVoxels; ++s) {
        const auto us = static_cast<std::size_t>(s);
        if (b->W[us] <= 0.0) continue;
        const VoxelKey k{(bk.x << kBlockShift) | (s % kBlockSide), (bk.y << kBlockShift) | ((s / kBlockSide) % kBlockSide),
                         (bk.z << kBlockShift) | (s / (kBlockSide * kBlockSide))};
        out.push_back({k, {b->D[us], b->W[us], b->last[us]}});
      }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }

  double min_distance() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& [bk, b] : blocks_) {
      for (std::size_t s = 0; s < static_cast<std::size_t>(kBlockVoxels); ++s) {
        if (b->W[s] > 0.0) m = std::min(m, b->D[s]);
      }
    }
    return m;
  }

 private:
  double l_vox_;
  std::size_t count_ = 0;
  std::unordered_map<VoxelKey, std::unique_ptr<Block>, VoxelKeyHash> blocks_;
};

enum class Occupancy { free, occupied, unknown };

inline Occupancy is_free(const LoSField& field, const Point3& q, double l_vox) {
  const auto r = field.find(voxel_key(q, l_vox));
  if (!r) return Occupancy::unknown;
  return r->D <= 0.5 * l_vox ? Occupancy::occupied : Occupancy::free;
}

// ---------------------------------------------------------------------------
// Ray casting against a frame mesh
// ---------------------------------------------------------------------------

/// Signed sample for a ray hit at range `hit_range` and a voxel at `voxel_range`.
inline double truncated_los(double hit_range, double voxel_range, double l_vox) {
  const double f = hit_range - voxel_range;
  return f >= 0.0 ? f : std::max(f, -0.5 * l_vox);
}

namespace detail {

/// Conservative range of z over the great-circle arc between unit vectors u
/// and v. Points on the arc are normalized chord points, and the chord is at
/// least cos(theta/2) long, so endpoint extremes scaled by 1/cos(theta/2)
/// bound the arc.
inline void arc_z_range(const Vec3& u, const Vec3& v, double& lo, double& hi) {
  lo = std::min(u.z(), v.z());
  hi = std::max(u.z(), v.z());
  const double c2 = 0.5 * (1.0 + u.dot(v));
  if (c2 <= 1e-12) {
    lo = -1.0;
    hi = 1.0;
    return;
  }
  const double inv = 1.0 / std::sqrt(c2);
  if (hi > 0.0) hi = std::min(1.0, hi * inv);
  if (lo < 0.0) lo = std::max(-1.0, lo * inv);
}

/// Whether the direction +z (sign = 1) or -z (sign = -1) lies inside the
/// spherical triangle of unit vectors a, b, c.
inline bool contains_pole(const Vec3& a, const Vec3& b, const Vec3& c, double sign) {
  const double orient = a.dot(b.cross(c));
  if (orient == 0.0) return false;
  const double s = orient > 0.0 ? sign : -sign;
  auto cross_z = [](const Vec3& p, const Vec3& q) { return p.x() * q.y() - p.y() * q.x(); };
  return s * cross_z(a, b) >= 0.0 && s * cross_z(b, c) >= 0.0 && s * cross_z(c, a) >= 0.0;
}

}  // namespace detail

/// Ray-casting view of one frame mesh: BVH over its non-viewpoint faces (in
/// sensor-local coordinates), plus the angular region those faces can cover.
class FrameRayCaster {
 public:
  FrameRayCaster(const FrameMesh& mesh) : mesh_(&mesh) {
    std::vector<Triangle> faces;
    std::vector<std::uint32_t> ids;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
      if (mesh.face_on_viewpoint[f]) continue;
      faces.push_back(mesh.faces[f]);
      ids.push_back(static_cast<std::uint32_t>(f));
    }
    bvh_ = Bvh(mesh.points, faces, ids);
    build_adjacency(ids);
    sector_meshed_.assign(static_cast<std::size_t>(std::max(mesh.sector_count, 1)), 0);
    for (int s : mesh.meshed_sectors) sector_meshed_[static_cast<std::size_t>(s)] = 1;
    sector_angle_ = kTwoPi / std::max(mesh.sector_count, 1);

    // Direction z-range (sine of elevation) covered by the faces.
    std::vector<Vec3> unit(mesh.points.size());
    for (std::size_t i = 0; i < unit.size(); ++i) unit[i] = mesh.points[i].normalized();
    for (const auto& f : faces) {
      const Vec3& a = unit[f[0]];
      const Vec3& b = unit[f[1]];
      const Vec3& c = unit[f[2]];
      double lo = 0.0, hi = 0.0;
      for (const auto& [u, v] : {std::pair{&a, &b}, std::pair{&b, &c}, std::pair{&c, &a}}) {
        detail::arc_z_range(*u, *v, lo, hi);
        z_lo_ = std::min(z_lo_, lo);
        z_hi_ = std::max(z_hi_, hi);
      }
      if (detail::contains_pole(a, b, c, 1.0)) z_hi_ = 1.0;
      if (detail::contains_pole(a, b, c, -1.0)) z_lo_ = -1.0;
    }
    z_lo_ -= 1e-9;
    z_hi_ += 1e-9;
  }

  const FrameMesh& mesh() const { return *mesh_; }
  const Bvh& bvh() const { return bvh_; }
  double z_min() const { return z_lo_; }
  double z_max() const { return z_hi_; }

  /// Whether a sensor-local direction could possibly hit a face.
  bool may_hit(const Vec3& local_dir) const {
    const double r = local_dir.norm();
    if (!(r > 0.0)) return false;
    const double z = local_dir.z() / r;
    if (z < z_lo_ || z > z_hi_) return false;
    return sector_meshed_[static_cast<std::size_t>(
        sector_of(local_dir, sector_angle_, static_cast<int>(sector_meshed_.size())))] != 0;
  }

  /// Range to the first face along the sensor-local direction, if any.
  /// `hint` is a face id worth testing first (typically the previous
  /// neighbouring ray's answer); the result does not depend on it.
  std::optional<RayHit> cast(const Vec3& local_dir, std::uint32_t hint = kNoFace) const {
    const double r = local_dir.norm();
    if (!(r > 0.0)) return std::nullopt;
    const Vec3 dir = local_dir / r;
    if (hint != kNoFace) {
      const auto& f = mesh_->faces[hint];
      if (auto t = ray_triangle(Point3::Zero(), dir, mesh_->points[f[0]], mesh_->points[f[1]], mesh_->points[f[2]])) {
        const RayHit seed{*t, hint};
        return bvh_.intersect(Point3::Zero(), dir, 0.0, &seed);
      }
    }
    return bvh_.intersect(Point3::Zero(), dir);
  }

  static constexpr std::uint32_t kNoFace = std::numeric_limits<std::uint32_t>::max();

  /// Walk across edge-adjacent faces from `start` toward the face whose
  /// angular footprint contains `dir`. Returns kNoFace when the walk leaves
  /// the mesh or runs out of steps.
  std::uint32_t locate(const Vec3& dir, std::uint32_t start, int max_steps = 24) const {
    std::uint32_t f = start;
    for (int step = 0; step < max_steps && f != kNoFace; ++step) {
      const auto& t = mesh_->faces[f];
      const Point3& a = mesh_->points[t[0]];
      const Point3& b = mesh_->points[t[1]];
      const Point3& c = mesh_->points[t[2]];
      const double sigma = a.dot(b.cross(c)) >= 0.0 ? 1.0 : -1.0;
      const double side[3] = {sigma * dir.dot(b.cross(c)), sigma * dir.dot(c.cross(a)), sigma * dir.dot(a.cross(b))};
      int worst = 0;
      for (int e = 1; e < 3; ++e) {
        if (side[e] < side[worst]) worst = e;
      }
      if (side[worst] >= 0.0) return f;
      f = adjacency_[3 * static_cast<std::size_t>(f) + static_cast<std::size_t>(worst)];
    }
    return kNoFace;
  }

  /// Truncated line-of-sight sample for a sensor-local voxel center, or
  /// nullopt on a miss. `hint` is a nearby face id (updated to the face that
  /// decided the sample). When a face reached from the hint is hit at least
  /// l/2 in front of the voxel, the nearest hit is too, so the sample is
  /// exactly the truncation floor and no search is needed. Otherwise the
  /// full nearest-hit query runs; the result never depends on the hint.
  std::optional<double> sample(const Vec3& local, double l_vox, std::uint32_t& hint) const {
    const double r = local.norm();
    if (!(r > 0.0)) return std::nullopt;
    const Vec3 dir = local / r;
    const double floor_at = r - 0.5 * l_vox;
    RayHit seed;
    if (hint != kNoFace) {
      const std::uint32_t h = locate(dir, hint);
      if (h != kNoFace) {
        const auto& f = mesh_->faces[h];
        if (auto t = ray_triangle(Point3::Zero(), dir, mesh_->points[f[0]], mesh_->points[f[1]], mesh_->points[f[2]])) {
          hint = h;
          if (*t <= floor_at) return -0.5 * l_vox;
          seed = {*t, h};
        }
      }
    }
    const auto hit = bvh_.intersect(Point3::Zero(), dir, 0.0, std::isfinite(seed.t) ? &seed : nullptr);
    if (!hit) return std::nullopt;
    hint = hit->face;
    return truncated_los(hit->t, r, l_vox);
  }

 private:
  void build_adjacency(const std::vector<std::uint32_t>& real) {
    adjacency_.assign(3 * mesh_->faces.size(), kNoFace);
    // Faces incident to each vertex, in ascending face order.
    const std::size_t nv = mesh_->points.size() + 1;
    std::vector<std::uint32_t> start(nv + 1, 0);
    for (auto f : real) {
      for (auto v : mesh_->faces[f]) ++start[v + 1];
    }
    for (std::size_t v = 0; v < nv; ++v) start[v + 1] += start[v];
    std::vector<std::uint32_t> incident(start[nv]);
    std::vector<std::uint32_t> fill(start.begin(), start.end() - 1);
    for (auto f : real) {
      for (auto v : mesh_->faces[f]) incident[fill[v]++] = f;
    }
    for (auto f : real) {
      const auto& t = mesh_->faces[f];
      for (std::uint32_t e = 0; e < 3; ++e) {
        const std::uint32_t u = t[(e + 1) % 3], v = t[(e + 2) % 3];  // edge opposite vertex e
        for (std::uint32_t i = start[u]; i < start[u + 1]; ++i) {
          const std::uint32_t g = incident[i];
          if (g == f) continue;
          const auto& h = mesh_->faces[g];
          if (h[0] == v || h[1] == v || h[2] == v) {
            adjacency_[3 * static_cast<std::size_t>(f) + e] = g;
            break;
          }
        }
      }
    }
  }

  const FrameMesh* mesh_;
  std::vector<std::uint32_t> adjacency_;
  Bvh bvh_;
  std::vector<std::uint8_t> sector_meshed_;
  double sector_angle_ = kTwoPi;
  double z_lo_ = std::numeric_limits<double>::infinity();
  double z_hi_ = -std::numeric_limits<double>::infinity();
};

/// Line-of-sight sample for world point q, or nullopt when the ray misses.
inline std::optional<double> los_distance(const FrameRayCaster& caster, const Point3& q, double l_vox) {
  const Pose& pose = caster.mesh().pose;
  const Vec3 local = pose.rotation().transpose() * Vec3(q - pose.position);
  const double range = local.norm();
  if (!(range > 0.0)) return std::nullopt;
  const auto hit = caster.cast(local);
  if (!hit) return std::nullopt;
  return truncated_los(hit->t, range, l_vox);
}

/// One frame's samples, sorted by voxel key.
struct FrameField {
  std::int64_t frame_id = 0;
  std::vector<VoxelKey> keys;
  std::vector<double> d;

  std::size_t size() const { return keys.size(); }

  std::optional<double> lookup(const VoxelKey& k) const {
    auto it = std::lower_bound(keys.begin(), keys.end(), k);
    if (it == keys.end() || *it != k) return std::nullopt;
    return d[static_cast<std::size_t>(it - keys.begin())];
  }
};

/// Samples for every voxel center within the update radius whose ray hits
/// the mesh.
inline FrameField compute_frame_field(const FrameRayCaster& caster, const FieldParams& params) {
  params.validate();
  const double l = params.l_vox;
  const double R = params.update_radius;
  const Pose& pose = caster.mesh().pose;
  const Point3 s = pose.position;
  const Eigen::Matrix3d rt = pose.rotation().transpose();
  const VoxelKey lo = voxel_key(s - Vec3::Constant(R), l);
  const VoxelKey hi = voxel_key(s + Vec3::Constant(R), l);
  const int nx = hi.x - lo.x + 1;

  std::vector<std::vector<std::pair<VoxelKey, double>>> rows(static_cast<std::size_t>(nx));
#pragma omp parallel for schedule(dynamic, 1)
  for (int ix = 0; ix < nx; ++ix) {
    auto& row = rows[static_cast<std::size_t>(ix)];
    const int i = lo.x + ix;
    const double cx = (i + 0.5) * l - s.x();
    std::uint32_t hint = FrameRayCaster::kNoFace;
    for (int j = lo.y; j <= hi.y; ++j) {
      const double cy = (j + 0.5) * l - s.y();
      const double rxy2 = cx * cx + cy * cy;
      if (rxy2 > R * R) continue;
      for (int k = lo.z; k <= hi.z; ++k) {
        const double cz = (k + 0.5) * l - s.z();
        if (rxy2 + cz * cz > R * R) continue;
        const Vec3 local = rt * Vec3(cx, cy, cz);
        if (!caster.may_hit(local)) continue;
        if (const auto d = caster.sample(local, l, hint)) row.push_back({VoxelKey{i, j, k}, *d});
      }
    }
  }
  FrameField out;
  out.frame_id = caster.mesh().frame_id;
  std::size_t total = 0;
  for (const auto& r : rows) total += r.size();
  out.keys.reserve(total);
  out.d.reserve(total);
  for (const auto& r : rows) {
    for (const auto& [k, v] : r) {
      out.keys.push_back(k);
      out.d.push_back(v);
    }
  }
  return out;
}

inline FrameField compute_frame_field(const FrameMesh& mesh, const FieldParams& params) {
  return compute_frame_field(FrameRayCaster(mesh), params);
}

/// Fold a frame's samples into the field. Voxels are written in parallel;
/// each sample touches a distinct voxel.
inline void fuse(LoSField& field, const FrameField& ff, const FieldParams& params) {
  params.validate();
  if (std::abs(field.l_vox() - params.l_vox) > 1e-12) throw DomainError("field and parameters disagree on l_vox");
  const std::size_t n = ff.keys.size();
  std::vector<LoSField::Block*> target(n, nullptr);
  std::size_t fresh = 0;
  VoxelKey last_block{std::numeric_limits<std::int32_t>::min(), 0, 0};
  LoSField::Block* cur = nullptr;
  for (std::size_t i = 0; i < n; ++i) {
    const VoxelKey bk = LoSField::block_of(ff.keys[i]);
    if (!cur || bk != last_block) {
      cur = &field.block(bk);
      last_block = bk;
    }
    target[i] = cur;
    if (cur->W[static_cast<std::size_t>(LoSField::slot_of(ff.keys[i]))] <= 0.0) ++fresh;
  }
  const auto sn = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < sn; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    LoSField::fuse_slot(*target[ui], static_cast<std::size_t>(LoSField::slot_of(ff.keys[ui])), ff.d[ui], ff.frame_id,
                        params.w_prev, params.w_new);
  }
  field.note_new_voxels(fresh);
}

/// Compute the frame's samples and fuse them. Returns the samples.
inline FrameField update_frame(LoSField& field, const FrameMesh& mesh, const FieldParams& params) {
  FrameField ff = compute_frame_field(mesh, params);
  fuse(field, ff, params);
  return ff;
}

// ---------------------------------------------------------------------------
// Moving-object detection
// ---------------------------------------------------------------------------

enum class PointLabel : std::uint8_t { static_point = 0, dynamic_point = 1, unobserved = 2 };

struct DynamicMask {
  std::int64_t frame_id = 0;
  std::vector<PointLabel> labels;

  std::size_t count(PointLabel l) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l)); }
};

/// Label each point of `frame` against the field as it stood before this
/// frame was fused. A point is dynamic when its voxel was free (D > l/2) and
/// the frame's own sample there says occupied (d <= l/2).
inline DynamicMask detect_dynamic(const LoSField& field, const ScanFrame& frame, const FrameField& ff,
                                  const FieldParams& params) {
  const double half = 0.5 * params.l_vox;
  DynamicMask mask;
  mask.frame_id = frame.frame_id;
  mask.labels.resize(frame.points.size());
  const auto n = static_cast<std::int64_t>(frame.points.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const VoxelKey k = voxel_key(frame.world_point(ui), params.l_vox);
    const auto prev = field.find(k);
    if (!prev) {
      mask.labels[ui] = PointLabel::unobserved;
      continue;
    }
    const auto now = ff.lookup(k);
    mask.labels[ui] = (prev->D > half && now && *now <= half) ? PointLabel::dynamic_point : PointLabel::static_point;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Export / reload
// ---------------------------------------------------------------------------

inline void export_field_csv(const LoSField& field, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(path + ": cannot open for writing");
  std::fprintf(f, "i,j,k,D,W,last_frame\n");
  for (const auto& [k, r] : field.sorted_voxels()) {
    std::fprintf(f, "%d,%d,%d,%.17g,%.17g,%" PRId64 "\n", k.x, k.y, k.z, r.D, r.W, r.last_frame);
  }
  const bool ok = std::ferror(f) == 0;
  std::fclose(f);
  if (!ok) throw Error(path + ": write failed");
}

inline LoSField load_field_csv(const std::string& path, double l_vox) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open field dump");
  LoSField field(l_vox);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("i,", 0) == 0) continue;
    if (line.empty()) continue;
    VoxelKey k;
    VoxelRecord r;
    long long last = 0;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%lf,%lf,%lld%c", &k.x, &k.y, &k.z, &r.D, &r.W, &last, &tail) != 6 ||
        !(r.W > 0.0)) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 'i,j,k,D,W,last_frame'");
    }
    r.last_frame = last;
    field.set(k, r);
  }
  return field;
}

/// Dense z-layer of D values. Header line, then one row per j (ascending),
/// values for ascending i, "nan" where the voxel was never observed.
inline void export_field_slice(const LoSField& field, const std::string& path, std::int32_t layer) {
  std::int32_t i0 = std::numeric_limits<std::int32_t>::max(), i1 = std::numeric_limits<std::int32_t>::min();
  std::int32_t j0 = i0, j1 = i1;
  const auto voxels = field.sorted_voxels();
  for (const auto& [k, r] : voxels) {
    if (k.z != layer) continue;
    i0 = std::min(i0, k.x);
    i1 = std::max(i1, k.x);
    j0 = std::min(j0, k.y);
    j1 = std::max(j1, k.y);
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(path + ": cannot open for writing");
  if (i0 > i1) {
    std::fprintf(f, "# layer=%d empty\n", layer);
    std::fclose(f);
    return;
  }
  const int nx = i1 - i0 + 1, ny = j1 - j0 + 1;
  std::vector<double> grid(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), std::nan(""));
  for (const auto& [k, r] : voxels) {
    if (k.z == layer) grid[static_cast<std::size_t>(k.y - j0) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(k.x - i0)] = r.D;
  }
  std::fprintf(f, "# layer=%d i0=%d j0=%d nx=%d ny=%d l_vox=%.17g\n", layer, i0, j0, nx, ny, field.l_vox());
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double v = grid[static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i)];
      if (i) std::fputc(',', f);
      if (std::isnan(v)) std::fputs("nan", f);
      else std::fprintf(f, "%.9g", v);
    }
    std::fputc('\n', f);
  }
  std::fclose(f);
}

}  // namespace losmap
