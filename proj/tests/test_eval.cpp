#include "losmap/eval.hpp"
#include "losmap/frame_mesh.hpp"

#include "scenes.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace losmap;

namespace {

std::vector<Point3> random_cloud(std::size_t n, std::uint64_t seed, double extent = 5.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-extent, extent);
  std::vector<Point3> pts(n);
  for (auto& p : pts) p = Point3(u(rng), u(rng), u(rng));
  return pts;
}

// Dense grid on the plane z = 0.
std::vector<Point3> plane_cloud(double step, int n) {
  std::vector<Point3> pts;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) pts.emplace_back(i * step, j * step, 0.0);
  return pts;
}

}  // namespace

TEST(KdTreeTest, NearestEqualsBruteForce) {
  const auto pts = random_cloud(5000, 1);
  // Duplicates exercise the lowest-index tie rule.
  auto with_dups = pts;
  for (std::size_t i = 0; i < 200; ++i) with_dups.push_back(pts[i * 7]);
  const KdTree tree(with_dups);
  const auto queries = random_cloud(5000, 2, 6.0);
  std::size_t mismatches = 0;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const Point3& q = qi % 5 == 0 ? with_dups[qi] : queries[qi];
    KdTree::Neighbor best;
    for (std::uint32_t i = 0; i < with_dups.size(); ++i) {
      const KdTree::Neighbor c{i, (with_dups[i] - q).squaredNorm()};
      if (c < best) best = c;
    }
    const auto got = tree.nearest(q);
    mismatches += got.index != best.index || got.dist2 != best.dist2;
  }
  EXPECT_EQ(mismatches, 0u);
}

TEST(KdTreeTest, KNearestEqualsSortedBruteForce) {
  const auto pts = random_cloud(2000, 3);
  const KdTree tree(pts);
  const auto queries = random_cloud(200, 4);
  for (const auto& q : queries) {
    std::vector<KdTree::Neighbor> all;
    for (std::uint32_t i = 0; i < pts.size(); ++i) all.push_back({i, (pts[i] - q).squaredNorm()});
    std::sort(all.begin(), all.end());
    const auto got = tree.nearest_k(q, 10);
    ASSERT_EQ(got.size(), 10u);
    for (std::size_t k = 0; k < 10; ++k) ASSERT_EQ(got[k].index, all[k].index);
  }
  EXPECT_TRUE(KdTree().nearest_k(Point3::Zero(), 3).empty());
}

TEST(NormalSimilarityTest, Examples) {
  const std::vector<Vec3> a{{0, 0, 1}, {1, 0, 0}, {0, 1, 0}};
  const std::vector<Vec3> flipped{{0, 0, -1}, {-1, 0, 0}, {0, 1, 0}};
  const std::vector<Vec3> ortho{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_DOUBLE_EQ(normal_similarity(a, a).mean_cosine, 1.0);
  EXPECT_DOUBLE_EQ(normal_similarity(a, flipped).mean_cosine, 1.0);
  EXPECT_DOUBLE_EQ(normal_similarity(a, ortho).mean_cosine, 0.0);
  const std::vector<std::uint8_t> none{0, 0, 0};
  EXPECT_THROW(normal_similarity(a, a, none), DomainError);
  const std::vector<std::uint8_t> first{1, 0, 0};
  const auto r = normal_similarity(a, ortho, first);
  EXPECT_EQ(r.valid, 1u);
  EXPECT_TRUE(std::isnan(r.per_point[1]));
  const std::vector<Vec3> short_list{{0, 0, 1}};
  EXPECT_THROW(normal_similarity(a, short_list), DomainError);
}

TEST(NormalSimilarityTest, MeshNormalsOnRoomFrame) {
  const auto sim = simulate_frame(scenes::box_room(), ScannerSpec{}, Pose(), 0.0, 0, 21);
  const FrameMesh mesh = build_frame_mesh(sim.frame, GhprParams{});
  const auto ours = normal_similarity(mesh.point_normals, sim.gt_normals, mesh.normal_valid);
  EXPECT_GE(ours.mean_cosine, 0.95);
  const auto pca = normal_similarity(pca_normals(sim.frame.points, 10), sim.gt_normals);
  EXPECT_LT(pca.mean_cosine, ours.mean_cosine);
}

TEST(PcaNormals, PlaneGivesPlaneNormal) {
  const auto pts = plane_cloud(0.1, 20);
  for (const auto& n : pca_normals(pts, 10)) EXPECT_NEAR(std::abs(n.z()), 1.0, 1e-9);
}

TEST(CloudMetricsTest, IdenticalClouds) {
  const auto pts = random_cloud(1000, 5);
  const auto m = cloud_metrics(pts, pts, 0.2);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.avg_hausdorff, 0.0);
  EXPECT_EQ(m.precision, 100.0);
  EXPECT_EQ(m.recall, 100.0);
  EXPECT_EQ(m.f1, 100.0);
  EXPECT_EQ(m.acc95, 0.0);
}

TEST(CloudMetricsTest, ShiftBeyondThreshold) {
  const auto gt = plane_cloud(0.05, 40);
  auto recon = gt;
  for (auto& p : recon) p.z() += 0.4;
  const auto m = cloud_metrics(recon, gt, 0.2);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_NEAR(m.rmse, 0.4, 1e-12);
  EXPECT_NEAR(m.acc95, 0.4, 1e-12);
}

TEST(CloudMetricsTest, HalfSubsetOfDenseCloud) {
  const auto gt = plane_cloud(0.02, 70);
  std::vector<Point3> recon;
  std::mt19937_64 rng(6);
  for (const auto& p : gt) {
    if (rng() % 2) recon.push_back(p);
  }
  const auto m = cloud_metrics(recon, gt, 0.2);
  EXPECT_EQ(m.precision, 100.0);
  EXPECT_EQ(m.recall, 100.0);
  EXPECT_EQ(m.rmse, 0.0);
  // Brute-force oracle for the directed gt -> recon mean.
  double sum = 0.0;
  for (const auto& g : gt) {
    double best = 1e300;
    for (const auto& r : recon) best = std::min(best, (g - r).norm());
    sum += best;
  }
  EXPECT_NEAR(m.avg_hausdorff, 0.5 * sum / static_cast<double>(gt.size()), 1e-12);
}

TEST(CloudMetricsTest, SymmetryAndRigidInvariance) {
  const auto a = random_cloud(800, 7);
  auto b = random_cloud(600, 8);
  const auto ab = cloud_metrics(a, b, 0.5);
  const auto ba = cloud_metrics(b, a, 0.5);
  EXPECT_NEAR(ab.avg_hausdorff, ba.avg_hausdorff, 1e-12);
  EXPECT_NEAR(ab.precision, ba.recall, 1e-12);
  const Eigen::Quaterniond q(Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()));
  const Vec3 t(100.0, -3.0, 7.5);
  std::vector<Point3> ta, tb;
  for (const auto& p : a) ta.push_back(q * p + t);
  for (const auto& p : b) tb.push_back(q * p + t);
  const auto moved = cloud_metrics(ta, tb, 0.5);
  EXPECT_NEAR(moved.rmse, ab.rmse, 1e-9);
  EXPECT_NEAR(moved.avg_hausdorff, ab.avg_hausdorff, 1e-9);
  EXPECT_NEAR(moved.acc95, ab.acc95, 1e-9);
  EXPECT_NEAR(moved.f1, ab.f1, 1e-9);
}

TEST(CloudMetricsTest, EmptyInputIsAnError) {
  const std::vector<Point3> empty;
  const auto pts = random_cloud(10, 9);
  EXPECT_THROW(cloud_metrics(empty, pts), DomainError);
  EXPECT_THROW(cloud_metrics(pts, empty), DomainError);
}

TEST(Percentile, NearestRank) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  EXPECT_EQ(percentile(v, 0.95), 95.0);
  EXPECT_EQ(percentile({3.0}, 0.95), 3.0);
  EXPECT_EQ(percentile({4.0, 1.0, 2.0, 3.0}, 0.95), 4.0);
}

TEST(DynamicMetricsTest, Examples) {
  DynamicMask mask;
  mask.labels = {PointLabel::dynamic_point, PointLabel::static_point, PointLabel::dynamic_point, PointLabel::unobserved};
  const std::vector<std::uint8_t> gt{1, 0, 1, 1};
  const auto same = dynamic_metrics(mask, gt);
  EXPECT_EQ(same.precision, 100.0);
  EXPECT_EQ(same.recall, 100.0);
  EXPECT_EQ(same.unobserved, 1u);

  DynamicMask none = mask;
  for (auto& l : none.labels) {
    if (l == PointLabel::dynamic_point) l = PointLabel::static_point;
  }
  const auto r = dynamic_metrics(none, gt);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.f1, 0.0);

  const std::vector<std::uint8_t> gt2{1, 1, 0, 0};
  const auto half = dynamic_metrics(mask, gt2);
  EXPECT_EQ(half.tp, 1u);
  EXPECT_EQ(half.fp, 1u);
  EXPECT_EQ(half.fn, 1u);
  EXPECT_EQ(half.precision, 50.0);
  EXPECT_EQ(half.recall, 50.0);
  EXPECT_THROW(dynamic_metrics(mask, std::vector<std::uint8_t>{1}), DomainError);
}

TEST(Reports, KeyValueFormat) {
  Report r{{"a", 1.5}, {"b", 100.0}};
  EXPECT_EQ(format_report(r), "a=1.5\nb=100\n");
}

TEST(Downsample, KeepsFirstPointPerCell) {
  const std::vector<Point3> pts{{0.01, 0.01, 0.01}, {0.02, 0.03, 0.04}, {0.12, 0.0, 0.0}, {-0.01, 0.0, 0.0}};
  const auto out = voxel_downsample(pts, 0.1);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0], pts[0]);
  EXPECT_EQ(out[1], pts[2]);
  EXPECT_EQ(out[2], pts[3]);
  EXPECT_THROW(voxel_downsample(pts, 0.0), DomainError);
}

TEST(CloudMetrics, PrecomputedDistancesGiveSameResult) {
  const auto a = random_cloud(800, 31), b = random_cloud(900, 32);
  const auto direct = cloud_metrics(a, b, 0.5);
  const auto split = cloud_metrics_from(nn_distances(a, KdTree(b)), nn_distances(b, KdTree(a)), 0.5);
  EXPECT_EQ(direct.rmse, split.rmse);
  EXPECT_EQ(direct.precision, split.precision);
  EXPECT_EQ(direct.recall, split.recall);
  EXPECT_EQ(direct.acc95, split.acc95);
}

TEST(CloudMetrics, AnalyticDistanceToRoomWalls) {
  const SceneSpec room = scenes::box_room();
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const Point3 p(u(rng), u(rng), u(rng) * 0.4);
    EXPECT_NEAR(static_surface_distance(room, p), scenes::room_wall_distance(p), 1e-12);
  }
}
