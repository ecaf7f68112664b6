#include "losmap/static_recon.hpp"

#include "scenes.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <set>
#include <random>

using namespace losmap;

namespace {

ScanFrame single_point(const Point3& p) {
  ScanFrame f;
  f.points = {p};
  return f;
}

TsdfGrid analytic_grid(double l, double tau, int half, const std::function<double(const Point3&)>& sdf) {
  TsdfGrid g(l, tau);
  for (int i = -half; i < half; ++i)
    for (int j = -half; j < half; ++j)
      for (int k = -half; k < half; ++k) g.set_sdf({i, j, k}, sdf(voxel_center({i, j, k}, l)));
  return g;
}

// Every undirected edge of the mesh with its face count.
std::map<std::pair<std::uint32_t, std::uint32_t>, int> edge_use(const TriangleMesh& m) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> use;
  for (const auto& t : m.faces) {
    for (int e = 0; e < 3; ++e) {
      const auto a = t[static_cast<std::size_t>(e)], b = t[static_cast<std::size_t>((e + 1) % 3)];
      ++use[{std::min(a, b), std::max(a, b)}];
    }
  }
  return use;
}

}  // namespace

TEST(Integrate, SinglePointPlaneDistances) {
  const double l = 0.5;
  TsdfGrid g(l, 1.5 * l);
  const std::vector<Vec3> n{Vec3::UnitZ()};
  const std::vector<std::uint8_t> valid{1};
  integrate(g, single_point(voxel_center({0, 0, 0}, l)), n, valid, nullptr, 30.0);
  EXPECT_DOUBLE_EQ(g.find({0, 0, 0})->sdf, 0.0);
  EXPECT_DOUBLE_EQ(g.find({0, 0, 1})->sdf, l);
  EXPECT_DOUBLE_EQ(g.find({0, 0, -1})->sdf, -l);
  EXPECT_DOUBLE_EQ(g.find({1, 0, 0})->sdf, 0.0);
  EXPECT_EQ(g.find({0, 0, 2}), nullptr);  // center 1.0 away, beyond 0.75
  EXPECT_EQ(g.find({0, 0, 0})->point_count, 1u);
  EXPECT_EQ(g.find({0, 0, 0})->mean_normal(), Vec3::UnitZ());

  TsdfGrid tight(l, 0.3);
  integrate(tight, single_point(Point3(0.25, 0.25, 0.05)), n, valid, nullptr, 30.0);
  EXPECT_NEAR(tight.find({0, 0, 0})->sdf, 0.2, 1e-12);
  for (const auto& [k, v] : tight.voxels()) EXPECT_LE(std::abs(v.sdf), 0.3);
}

TEST(Integrate, SkipsDynamicInvalidAndFarPoints) {
  ScanFrame f;
  f.points = {{1, 0, 0}, {2, 0, 0}, {40, 0, 0}};
  const std::vector<Vec3> n(3, Vec3::UnitX());
  std::vector<std::uint8_t> valid{1, 0, 1};
  DynamicMask mask;
  mask.labels = {PointLabel::dynamic_point, PointLabel::static_point, PointLabel::static_point};
  TsdfGrid g(0.5, 0.75);
  integrate(g, f, n, valid, &mask, 30.0);
  EXPECT_TRUE(g.empty());
  mask.labels[0] = PointLabel::unobserved;
  integrate(g, f, n, valid, &mask, 30.0);
  EXPECT_FALSE(g.empty());
  for (const auto& [k, v] : g.voxels()) EXPECT_LT(voxel_center(k, 0.5).x(), 2.0);
}

TEST(Integrate, AllDynamicMaskLeavesGridUnchanged) {
  const auto sim = simulate_frame(scenes::box_room(), ScannerSpec{}, Pose(), 0.0, 0, 1);
  const FrameMesh mesh = build_frame_mesh(sim.frame, GhprParams{});
  TsdfGrid g(0.5, 0.75);
  integrate(g, mesh, sim.frame, nullptr, 30.0);
  const TsdfGrid before = g;
  DynamicMask all;
  all.labels.assign(sim.frame.points.size(), PointLabel::dynamic_point);
  integrate(g, mesh, sim.frame, &all, 30.0);
  EXPECT_TRUE(g == before);
}

TEST(Integrate, FrameOrderChangesLittle) {
  const auto scene = scenes::box_room();
  std::vector<SimFrame> frames;
  std::vector<FrameMesh> meshes;
  for (int i = 0; i < 4; ++i) {
    const Pose pose(Point3(-2.0 + 1.3 * i, 0.4 * i, 0.0), Eigen::Quaterniond(Eigen::AngleAxisd(0.3 * i, Vec3::UnitZ())));
    frames.push_back(simulate_frame(scene, ScannerSpec{}, pose, 0.0, i, 3));
    frames.back().frame.pose = pose;
    meshes.push_back(build_frame_mesh(frames.back().frame, GhprParams{}));
  }
  TsdfGrid a(0.5, 0.75), b(0.5, 0.75);
  for (int i : {0, 1, 2, 3}) integrate(a, meshes[static_cast<std::size_t>(i)], frames[static_cast<std::size_t>(i)].frame, nullptr, 30.0);
  for (int i : {2, 0, 3, 1}) integrate(b, meshes[static_cast<std::size_t>(i)], frames[static_cast<std::size_t>(i)].frame, nullptr, 30.0);
  ASSERT_EQ(a.size(), b.size());
  double worst = 0.0;
  for (const auto& [k, v] : a.voxels()) {
    const TsdfVoxel* w = b.find(k);
    ASSERT_NE(w, nullptr);
    worst = std::max(worst, std::abs(v.sdf - w->sdf));
    ASSERT_EQ(v.weight, w->weight);
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(MarchingCubes, CaseTableIsClosedAndConsistent) {
  const auto& cases = detail::cube_cases();
  EXPECT_TRUE(cases[0].empty());
  EXPECT_TRUE(cases[255].empty());
  for (int m = 1; m < 255; ++m) {
    ASSERT_FALSE(cases[static_cast<std::size_t>(m)].empty()) << m;
    // Each crossing edge is used, and the polygon boundary lies on cube faces.
    std::map<std::pair<int, int>, int> directed;
    for (const auto& t : cases[static_cast<std::size_t>(m)]) {
      for (int e = 0; e < 3; ++e) ++directed[{t[static_cast<std::size_t>(e)], t[static_cast<std::size_t>((e + 1) % 3)]}];
    }
    for (const auto& [e, c] : directed) EXPECT_EQ(c, 1) << "case " << m;
  }
  // Complementary cases produce the same edges.
  for (int m = 1; m < 128; ++m) {
    std::set<int> a, b;
    for (const auto& t : cases[static_cast<std::size_t>(m)]) a.insert(t.begin(), t.end());
    for (const auto& t : cases[static_cast<std::size_t>(255 - m)]) b.insert(t.begin(), t.end());
    EXPECT_EQ(a, b) << m;
  }
}

TEST(MarchingCubes, AllPositiveGridIsEmpty) {
  const auto g = analytic_grid(0.5, 0.75, 4, [](const Point3&) { return 0.5; });
  EXPECT_TRUE(extract_mesh(g).empty());
}

TEST(MarchingCubes, PlaneNormalsAndPosition) {
  const Vec3 n = Vec3(0.2, -0.3, 1.0).normalized();
  const double off = 0.13;
  const auto g = analytic_grid(0.25, 10.0, 8, [&](const Point3& p) { return n.dot(p) - off; });
  const auto m = extract_mesh(g);
  ASSERT_FALSE(m.empty());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    EXPECT_NEAR(n.dot(m.vertices[i]) - off, 0.0, 1e-12);
    EXPECT_GT(m.normals[i].dot(n), std::cos(2.0 * kPi / 180.0));
  }
  for (std::size_t f = 0; f < m.faces.size(); ++f) EXPECT_GT(m.face_area(f), 1e-12);
}

TEST(MarchingCubes, SphereRadiusAndClosure) {
  const double l = 0.25, radius = 1.3;
  const auto g = analytic_grid(l, 10.0, 10, [&](const Point3& p) { return p.norm() - radius; });
  const auto m = extract_mesh(g);
  ASSERT_GT(m.faces.size(), 100u);
  double err = 0.0;
  for (const auto& v : m.vertices) err += std::abs(v.norm() - radius);
  err /= static_cast<double>(m.vertices.size());
  EXPECT_LT(err, l / 2);
  EXPECT_LT(err, 0.01);
  for (const auto& [e, c] : edge_use(m)) ASSERT_EQ(c, 2);
  const auto V = static_cast<long>(m.vertices.size());
  const auto F = static_cast<long>(m.faces.size());
  EXPECT_EQ(V - 3 * F / 2 + F, 2);
  // Normals point outward, toward positive SDF.
  for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_GT(m.normals[i].dot(m.vertices[i].normalized()), 0.9);
}

TEST(MarchingCubes, SaddleCellsStayWatertight) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  TsdfGrid g(1.0, 10.0);
  // Random signs inside, positive shell outside, so the surface is closed.
  for (int i = -1; i <= 6; ++i)
    for (int j = -1; j <= 6; ++j)
      for (int k = -1; k <= 6; ++k) {
        const bool shell = i < 0 || j < 0 || k < 0 || i > 5 || j > 5 || k > 5;
        double v = shell ? 1.0 : u(rng);
        if (v == 0.0) v = 0.5;
        g.set_sdf({i, j, k}, v);
      }
  const auto m = extract_mesh(g);
  ASSERT_FALSE(m.empty());
  std::size_t bad = 0;
  for (const auto& [e, c] : edge_use(m)) bad += c != 2;
  EXPECT_EQ(bad, 0u);
}

TEST(MarchingCubes, IncompleteCellsAreSkipped) {
  auto g = analytic_grid(0.5, 0.75, 3, [](const Point3& p) { return p.z() - 0.1; });
  const std::size_t full = extract_mesh(g).faces.size();
  TsdfGrid holes(0.5, 0.75);
  for (const auto& [k, v] : g.voxels()) {
    if (!(k.x == 0 && k.y == 0 && k.z == 0)) holes.set_sdf(k, v.sdf);
  }
  const std::size_t fewer = extract_mesh(holes).faces.size();
  EXPECT_GT(full, 0u);
  EXPECT_LT(fewer, full);
}

TEST(Reconstruction, RoomMeshNearWalls) {
  const auto scene = scenes::box_room();
  TsdfGrid g(0.5, 0.75);
  for (int i = 0; i < 6; ++i) {
    const Pose pose(Point3(-5.0 + 2.0 * i, -1.0 + 0.4 * i, 0.0), Eigen::Quaterniond::Identity());
    auto sim = simulate_frame(scene, ScannerSpec{}, pose, 0.0, i, 2);
    sim.frame.pose = pose;
    const FrameMesh mesh = build_frame_mesh(sim.frame, GhprParams{});
    integrate(g, mesh, sim.frame, nullptr, 30.0);
  }
  const auto m = extract_mesh(g);
  ASSERT_GT(m.vertices.size(), 1000u);
  std::size_t near = 0;
  for (const auto& v : m.vertices) near += scenes::room_wall_distance(v) <= 0.75;
  EXPECT_GE(static_cast<double>(near), 0.95 * static_cast<double>(m.vertices.size()));
}
