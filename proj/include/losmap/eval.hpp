#pragma once

// Evaluation metrics: normal similarity, PCA baseline normals, cloud-to-cloud
// accuracy and completeness, and dynamic-point classification scores.

#include "losmap/los_field.hpp"
#include "losmap/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace losmap {

/// Static 3-d tree with exact nearest-neighbour queries. Ties between equally
/// distant points go to the lowest index.
class KdTree {
 public:
  struct Neighbor {
    std::uint32_t index = 0;
    double dist2 = std::numeric_limits<double>::infinity();

    bool operator<(const Neighbor& o) const { return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index); }
  };

  KdTree() = default;

  explicit KdTree(std::span<const Point3> points) : pts_(points.begin(), points.end()) {
    order_.resize(pts_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (!pts_.empty()) build(0, static_cast<std::uint32_t>(pts_.size()), 0);
  }

  std::size_t size() const { return pts_.size(); }
  const Point3& point(std::uint32_t i) const { return pts_[i]; }

  Neighbor nearest(const Point3& q) const {
    Neighbor best;
    if (!nodes_.empty()) search(0, q, best);
    return best;
  }

  /// The k nearest points, closest first.
  std::vector<Neighbor> nearest_k(const Point3& q, std::size_t k) const {
    std::priority_queue<Neighbor> heap;  // worst on top
    if (!nodes_.empty() && k > 0) search_k(0, q, k, heap);
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = heap.top();
      heap.pop();
    }
    return out;
  }

 private:
  struct Node {
    std::uint32_t first = 0, count = 0;  // leaf range in order_
    std::uint32_t left = 0, right = 0;
    int axis = -1;
    double split = 0.0;
  };
  static constexpr std::uint32_t kLeaf = 8;

  std::uint32_t build(std::uint32_t first, std::uint32_t last, int depth) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});
    if (last - first <= kLeaf || depth > 64) {
      nodes_[id].first = first;
      nodes_[id].count = last - first;
      return id;
    }
    Point3 lo = pts_[order_[first]], hi = lo;
    for (std::uint32_t i = first; i < last; ++i) {
      lo = lo.cwiseMin(pts_[order_[i]]);
      hi = hi.cwiseMax(pts_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::uint32_t mid = first + (last - first) / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + last,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double x = pts_[a][axis], y = pts_[b][axis];
                       return x < y || (x == y && a < b);
                     });
    const double split = pts_[order_[mid]][axis];
    const std::uint32_t left = build(first, mid, depth + 1);
    const std::uint32_t right = build(mid, last, depth + 1);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(std::uint32_t id, const Point3& q, Neighbor& best) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::uint32_t i = n.first; i < n.first + n.count; ++i) {
        const Neighbor c{order_[i], (pts_[order_[i]] - q).squaredNorm()};
        if (c < best) best = c;
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const std::uint32_t near = diff < 0.0 ? n.left : n.right;
    const std::uint32_t far = diff < 0.0 ? n.right : n.left;
    search(near, q, best);
    if (diff * diff <= best.dist2) search(far, q, best);
  }

  void search_k(std::uint32_t id, const Point3& q, std::size_t k, std::priority_queue<Neighbor>& heap) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::uint32_t i = n.first; i < n.first + n.count; ++i) {
        const Neighbor c{order_[i], (pts_[order_[i]] - q).squaredNorm()};
        if (heap.size() < k) heap.push(c);
        else if (c < heap.top()) {
          heap.pop();
          heap.push(c);
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const std::uint32_t near = diff < 0.0 ? n.left : n.right;
    const std::uint32_t far = diff < 0.0 ? n.right : n.left;
    search_k(near, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.top().dist2) search_k(far, q, k, heap);
  }

  std::vector<Point3> pts_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Normals
// ---------------------------------------------------------------------------

struct NormalSimilarity {
  double mean_cosine = 0.0;
  std::size_t valid = 0;
  std::vector<double> per_point;  // NaN where not valid
};

/// |est . gt| per valid point and its mean. Sign-agnostic.
inline NormalSimilarity normal_similarity(std::span<const Vec3> est, std::span<const Vec3> gt,
                                          std::span<const std::uint8_t> valid = {}) {
  if (est.size() != gt.size()) throw DomainError("normal lists differ in length");
  if (!valid.empty() && valid.size() != est.size()) throw DomainError("valid mask differs in length");
  NormalSimilarity out;
  out.per_point.assign(est.size(), std::nan(""));
  double sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (!valid.empty() && !valid[i]) continue;
    const double a = est[i].norm(), b = gt[i].norm();
    if (!(a > 0.0) || !(b > 0.0)) continue;
    const double c = std::min(1.0, std::abs(est[i].dot(gt[i])) / (a * b));
    out.per_point[i] = c;
    sum += c;
    ++out.valid;
  }
  if (out.valid == 0) throw DomainError("no valid normals to compare");
  out.mean_cosine = sum / static_cast<double>(out.valid);
  return out;
}

/// Baseline normals: smallest-eigenvalue direction of the covariance of each
/// point's k nearest neighbours (the point included).
inline std::vector<Vec3> pca_normals(std::span<const Point3> points, std::size_t k = 10) {
  const KdTree tree(points);
  std::vector<Vec3> out(points.size(), Vec3::Zero());
  const auto n = static_cast<std::int64_t>(points.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto nb = tree.nearest_k(points[static_cast<std::size_t>(i)], k);
    if (nb.size() < 3) continue;
    Point3 mean = Point3::Zero();
    for (const auto& x : nb) mean += tree.point(x.index);
    mean /= static_cast<double>(nb.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& x : nb) {
      const Vec3 d = tree.point(x.index) - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    out[static_cast<std::size_t>(i)] = es.eigenvectors().col(0).normalized();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cloud metrics
// ---------------------------------------------------------------------------

struct CloudMetrics {
  double rmse = 0.0;           // meters, recon -> gt
  double avg_hausdorff = 0.0;  // meters, mean of both directed mean distances
  double precision = 0.0;      // percent of recon within tau_m of gt
  double recall = 0.0;         // percent of gt within tau_m of recon
  double f1 = 0.0;             // percent
  double acc95 = 0.0;          // meters, 95th percentile of recon -> gt
  std::size_t recon_count = 0, gt_count = 0;
};

/// Distance from each point of `from` to its nearest point of `to`.
inline std::vector<double> nn_distances(std::span<const Point3> from, const KdTree& to) {
  std::vector<double> d(from.size());
  const auto n = static_cast<std::int64_t>(from.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    d[static_cast<std::size_t>(i)] = std::sqrt(to.nearest(from[static_cast<std::size_t>(i)]).dist2);
  }
  return d;
}

/// Nearest-rank percentile, q in (0, 1].
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw DomainError("percentile of an empty list");
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

/// First point (in input order) of each occupied cell of size `cell`.
inline std::vector<Point3> voxel_downsample(std::span<const Point3> points, double cell) {
  if (!(cell > 0.0)) throw DomainError("downsample cell must be > 0");
  std::unordered_set<VoxelKey, VoxelKeyHash> seen;
  std::vector<Point3> out;
  for (const auto& p : points) {
    if (seen.insert(voxel_key(p, cell)).second) out.push_back(p);
  }
  return out;
}

inline double f1_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

/// Metrics from precomputed nearest distances: recon -> gt and gt -> recon.
inline CloudMetrics cloud_metrics_from(const std::vector<double>& r2g, const std::vector<double>& g2r, double tau_m) {
  if (r2g.empty() || g2r.empty()) throw DomainError("cloud metrics need two non-empty clouds");
  if (!(tau_m > 0.0)) throw DomainError("tau_m must be > 0");
  CloudMetrics m;
  m.recon_count = r2g.size();
  m.gt_count = g2r.size();
  double sq = 0.0, sum_r = 0.0, sum_g = 0.0;
  std::size_t in_r = 0, in_g = 0;
  for (double d : r2g) {
    sq += d * d;
    sum_r += d;
    in_r += d <= tau_m;
  }
  for (double d : g2r) {
    sum_g += d;
    in_g += d <= tau_m;
  }
  const auto nr = static_cast<double>(r2g.size()), ng = static_cast<double>(g2r.size());
  m.rmse = std::sqrt(sq / nr);
  m.avg_hausdorff = 0.5 * (sum_r / nr + sum_g / ng);
  m.precision = 100.0 * static_cast<double>(in_r) / nr;
  m.recall = 100.0 * static_cast<double>(in_g) / ng;
  m.f1 = f1_score(m.precision, m.recall);
  m.acc95 = percentile(r2g, 0.95);
  return m;
}

inline CloudMetrics cloud_metrics(std::span<const Point3> recon, std::span<const Point3> gt, double tau_m = 0.2) {
  if (recon.empty() || gt.empty()) throw DomainError("cloud metrics need two non-empty clouds");
  if (!(tau_m > 0.0)) throw DomainError("tau_m must be > 0");
  const KdTree gt_tree(gt), recon_tree(recon);
  return cloud_metrics_from(nn_distances(recon, gt_tree), nn_distances(gt, recon_tree), tau_m);
}

// ---------------------------------------------------------------------------
// Dynamic-point classification
// ---------------------------------------------------------------------------

struct DynamicMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0, unobserved = 0;
  double precision = 100.0;  // percent; 100 when nothing is predicted dynamic
  double recall = 100.0;     // percent; 100 when nothing is truly dynamic
  double f1 = 100.0;

  void add(const DynamicMetrics& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    unobserved += o.unobserved;
    finish();
  }

  void finish() {
    precision = tp + fp ? 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp) : 100.0;
    recall = tp + fn ? 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fn) : 100.0;
    f1 = f1_score(precision, recall);
  }
};

/// Dynamic is the positive class; unobserved points are left out.
inline DynamicMetrics dynamic_metrics(const DynamicMask& mask, std::span<const std::uint8_t> gt_dynamic) {
  if (mask.labels.size() != gt_dynamic.size()) throw DomainError("mask and ground truth differ in length");
  DynamicMetrics m;
  for (std::size_t i = 0; i < gt_dynamic.size(); ++i) {
    if (mask.labels[i] == PointLabel::unobserved) {
      ++m.unobserved;
      continue;
    }
    const bool pred = mask.labels[i] == PointLabel::dynamic_point;
    const bool truth = gt_dynamic[i] != 0;
    if (pred && truth) ++m.tp;
    else if (pred) ++m.fp;
    else if (truth) ++m.fn;
    else ++m.tn;
  }
  m.finish();
  return m;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

using Report = std::vector<std::pair<std::string, double>>;

inline void add_cloud_metrics(Report& r, const CloudMetrics& m, const std::string& prefix = "") {
  r.emplace_back(prefix + "rmse", m.rmse);
  r.emplace_back(prefix + "avg_hausdorff", m.avg_hausdorff);
  r.emplace_back(prefix + "precision", m.precision);
  r.emplace_back(prefix + "recall", m.recall);
  r.emplace_back(prefix + "f1", m.f1);
  r.emplace_back(prefix + "acc95", m.acc95);
  r.emplace_back(prefix + "recon_points", static_cast<double>(m.recon_count));
  r.emplace_back(prefix + "gt_points", static_cast<double>(m.gt_count));
}

inline void add_dynamic_metrics(Report& r, const DynamicMetrics& m, const std::string& prefix = "dynamic_") {
  r.emplace_back(prefix + "precision", m.precision);
  r.emplace_back(prefix + "recall", m.recall);
  r.emplace_back(prefix + "f1", m.f1);
  r.emplace_back(prefix + "tp", static_cast<double>(m.tp));
  r.emplace_back(prefix + "fp", static_cast<double>(m.fp));
  r.emplace_back(prefix + "fn", static_cast<double>(m.fn));
  r.emplace_back(prefix + "unobserved", static_cast<double>(m.unobserved));
}

inline std::string format_report(const Report& r) {
  std::string out;
  char buf[64];
  for (const auto& [k, v] : r) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    out += k + "=" + buf + "\n";
  }
  return out;
}

inline void write_report(const std::string& path, const Report& r) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(path + ": cannot open for writing");
  const std::string s = format_report(r);
  std::fwrite(s.data(), 1, s.size(), f);
  const bool ok = std::ferror(f) == 0;
  std::fclose(f);
  if (!ok) throw Error(path + ": write failed");
}

/// CSV with a header and one row per entry; all rows must have the header's width.
inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(path + ": cannot open for writing");
  for (std::size_t i = 0; i < header.size(); ++i) std::fprintf(f, "%s%s", i ? "," : "", header[i].c_str());
  std::fputc('\n', f);
  for (const auto& row : rows) {
    if (row.size() != header.size()) {
      std::fclose(f);
      throw DomainError(path + ": csv row width differs from header");
    }
    for (std::size_t i = 0; i < row.size(); ++i) std::fprintf(f, "%s%.10g", i ? "," : "", row[i]);
    std::fputc('\n', f);
  }
  const bool ok = std::ferror(f) == 0;
  std::fclose(f);
  if (!ok) throw Error(path + ": write failed");
}

}  // namespace losmap
