#include "losmap/hull.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <random>
#include <set>

using namespace losmap;

namespace {

std::vector<Point3> random_ball(std::size_t n, std::mt19937_64& rng, double radius = 1.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Point3> pts;
  while (pts.size() < n) {
    Point3 p(u(rng), u(rng), u(rng));
    if (p.squaredNorm() <= 1.0) pts.push_back(radius * p);
  }
  return pts;
}

std::vector<Point3> cube_corners() {
  std::vector<Point3> pts;
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) pts.emplace_back(x, y, z);
  return pts;
}

void expect_valid(const HullMesh& h, std::span<const Point3> pts, double eps) {
  std::size_t edges = 0;
  ASSERT_TRUE(closed_manifold(h.faces, &edges));
  EXPECT_EQ(static_cast<long>(h.vertex_indices.size()) - static_cast<long>(edges) +
                static_cast<long>(h.faces.size()),
            2);
  Point3 centroid = Point3::Zero();
  for (auto i : h.vertex_indices) centroid += pts[i];
  centroid /= static_cast<double>(h.vertex_indices.size());
  for (std::size_t f = 0; f < h.faces.size(); ++f) {
    const Vec3& n = h.face_normals[f];
    EXPECT_NEAR(n.norm(), 1.0, 1e-9);
    const Point3& a = pts[h.faces[f][0]];
    EXPECT_GT(n.dot(a - centroid), 0.0);
    for (const auto& p : pts) EXPECT_LE(n.dot(p - a), 4 * eps);
  }
}

}  // namespace

TEST(Quickhull, RegularTetrahedron) {
  const std::vector<Point3> pts{{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  const auto h = quickhull(pts);
  EXPECT_EQ(h.faces.size(), 4u);
  EXPECT_EQ(h.vertex_indices, (std::vector<std::uint32_t>{0, 1, 2, 3}));
  expect_valid(h, pts, default_hull_epsilon(pts));
}

TEST(Quickhull, UnitCube) {
  const auto pts = cube_corners();
  const auto h = quickhull(pts);
  EXPECT_EQ(h.faces.size(), 12u);
  EXPECT_EQ(h.vertex_indices.size(), 8u);
  EXPECT_NEAR(hull_volume(h, pts), 1.0, 1e-9);
  expect_valid(h, pts, default_hull_epsilon(pts));
}

TEST(Quickhull, CornerTetrahedronVolume) {
  const std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_NEAR(hull_volume(quickhull(pts), pts), 1.0 / 6.0, 1e-9);
}

TEST(Quickhull, MatchesBruteForceOnRandomBalls) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const auto pts = random_ball(50, rng);
    const double eps = default_hull_epsilon(pts);
    const auto h = quickhull(pts, eps);
    const auto oracle = oracle::brute_force_hull_vertices(pts, eps);
    EXPECT_EQ(std::set<std::uint32_t>(h.vertex_indices.begin(), h.vertex_indices.end()), oracle)
        << "trial " << trial;
    expect_valid(h, pts, eps);
  }
}

TEST(Quickhull, InteriorPointLeavesFacesUnchanged) {
  std::mt19937_64 rng(11);
  auto pts = random_ball(60, rng);
  const auto before = quickhull(pts, 1e-9);
  pts.push_back(Point3(0.01, -0.02, 0.005));
  const auto after = quickhull(pts, 1e-9);
  std::set<std::array<std::uint32_t, 3>> a, b;
  auto canon = [](Triangle t) {
    std::rotate(t.begin(), std::min_element(t.begin(), t.end()), t.end());
    return t;
  };
  for (auto t : before.faces) a.insert(canon(t));
  for (auto t : after.faces) b.insert(canon(t));
  EXPECT_EQ(a, b);
}

TEST(Quickhull, VolumeScalesCubically) {
  std::mt19937_64 rng(3);
  const auto pts = random_ball(200, rng);
  const double v = hull_volume(quickhull(pts), pts);
  for (double s : {0.01, 2.5, 1000.0}) {
    std::vector<Point3> scaled;
    for (const auto& p : pts) scaled.push_back(s * p);
    const double vs = hull_volume(quickhull(scaled), scaled);
    EXPECT_NEAR(vs / (s * s * s * v), 1.0, 1e-6);
  }
}

TEST(Quickhull, VolumeDominatesAnyTetrahedron) {
  std::mt19937_64 rng(5);
  const auto pts = random_ball(30, rng);
  const double v = hull_volume(quickhull(pts), pts);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  for (int t = 0; t < 500; ++t) {
    const auto& a = pts[pick(rng)];
    const auto& b = pts[pick(rng)];
    const auto& c = pts[pick(rng)];
    const auto& d = pts[pick(rng)];
    const double tv = std::abs((b - a).dot((c - a).cross(d - a))) / 6.0;
    EXPECT_GE(v, tv - 1e-12);
  }
}

TEST(Quickhull, DegenerateInputsNameTheStage) {
  const std::vector<Point3> same(5, Point3(1, 2, 3));
  const std::vector<Point3> line{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}, {-1, -1, -1}};
  const std::vector<Point3> plane{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {0.3, 0.2, 0}};
  auto message = [](const std::vector<Point3>& p) {
    try {
      quickhull(p, 1e-9);
    } catch (const DegeneracyError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message(same).find("stage 1"), std::string::npos);
  EXPECT_NE(message(line).find("stage 2"), std::string::npos);
  EXPECT_NE(message(plane).find("stage 3"), std::string::npos);
  EXPECT_THROW(quickhull(std::vector<Point3>{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}), DegeneracyError);
}

TEST(Quickhull, Deterministic) {
  std::mt19937_64 rng(9);
  const auto pts = random_ball(500, rng);
  const auto a = quickhull(pts);
  const auto b = quickhull(pts);
  EXPECT_EQ(a.faces, b.faces);
}

TEST(Quickhull, NearlySphericalCloudTiming) {
  // Shape of a radially inverted scan: a thin shell, almost every point on
  // the hull. Soft budget 40 ms for 35K points.
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> r(0.0, 1e-4);
  std::vector<Point3> pts;
  for (int i = 0; i < 35000; ++i) {
    Point3 p(g(rng), g(rng), g(rng));
    pts.push_back((1.0 - r(rng)) * 1e5 * p.normalized());
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto h = quickhull(pts);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  std::size_t edges = 0;
  EXPECT_TRUE(closed_manifold(h.faces, &edges));
  EXPECT_EQ(static_cast<long>(h.vertex_indices.size()) - static_cast<long>(edges) +
                static_cast<long>(h.faces.size()),
            2);
  RecordProperty("hull_35k_ms", std::to_string(ms));
  std::printf("quickhull 35K shell points: %.1f ms, %zu hull vertices\n", ms, h.vertex_indices.size());
  EXPECT_LT(ms, 400.0);  // 10x the soft budget; guards against pathological regressions
}
