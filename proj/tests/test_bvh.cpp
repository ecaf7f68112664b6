#include "losmap/bvh.hpp"
#include "losmap/frame_mesh.hpp"
#include "losmap/los_field.hpp"

#include "scenes.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace losmap;
using scenes::Soup;
using scenes::random_soup;
using scenes::uv_sphere;

namespace {

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vec3 v(g(rng), g(rng), g(rng));
  return v.normalized();
}

void expect_same(const std::optional<RayHit>& a, const std::optional<RayHit>& b, std::size_t& mismatches) {
  if (a.has_value() != b.has_value()) {
    ++mismatches;
    return;
  }
  if (a && (a->t != b->t || a->face != b->face)) ++mismatches;
}

}  // namespace

TEST(Bvh, MatchesBruteForceOnRandomSoup) {
  const Soup s = random_soup(10000, 3);
  const Bvh bvh(s.vertices, s.faces);
  ASSERT_EQ(bvh.size(), 10000u);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(-12.0, 12.0);
  std::size_t mismatches = 0, hits = 0;
  for (int i = 0; i < 10000; ++i) {
    const Point3 o(pos(rng), pos(rng), pos(rng));
    const Vec3 d = random_unit(rng);
    const auto a = bvh.intersect(o, d);
    const auto b = brute_force_nearest(s.vertices, s.faces, o, d);
    expect_same(a, b, mismatches);
    hits += b.has_value();
  }
  EXPECT_EQ(mismatches, 0u);
  EXPECT_GT(hits, 2000u);
}

TEST(Bvh, MatchesBruteForceOnClosedSphereFromInside) {
  const Soup s = uv_sphere(71, 72, 5.0);
  ASSERT_GE(s.faces.size(), 10000u);
  const Bvh bvh(s.vertices, s.faces);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(-2.0, 2.0);
  std::size_t mismatches = 0, misses = 0;
  for (int i = 0; i < 10000; ++i) {
    // Every fourth ray starts at the center and may pass through shared edges.
    const Point3 o = i % 4 == 0 ? Point3::Zero() : Point3(pos(rng), pos(rng), pos(rng));
    const Vec3 d = random_unit(rng);
    const auto a = bvh.intersect(o, d);
    expect_same(a, brute_force_nearest(s.vertices, s.faces, o, d), mismatches);
    misses += !a.has_value();
  }
  EXPECT_EQ(mismatches, 0u);
  EXPECT_LT(misses, 5u);
}

TEST(Bvh, TiesGoToLowestFaceId) {
  // Two copies of one triangle, reported under ids 7 and 3.
  const std::vector<Point3> v{{1, -1, -1}, {1, 1, -1}, {1, 0, 1}};
  const std::vector<Triangle> f{{0, 1, 2}, {0, 1, 2}};
  const std::vector<std::uint32_t> ids{7, 3};
  const Bvh bvh(v, f, ids);
  const auto h = bvh.intersect(Point3::Zero(), Vec3::UnitX());
  ASSERT_TRUE(h);
  EXPECT_EQ(h->face, 3u);
  EXPECT_DOUBLE_EQ(h->t, 1.0);
}

TEST(Bvh, SeedNeverChangesTheAnswer) {
  const Soup s = random_soup(3000, 8);
  const Bvh bvh(s.vertices, s.faces);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> pos(-12.0, 12.0);
  std::size_t mismatches = 0, seeded = 0;
  for (int i = 0; i < 3000; ++i) {
    const Point3 o(pos(rng), pos(rng), pos(rng));
    const Vec3 d = random_unit(rng);
    const auto plain = bvh.intersect(o, d);
    // Seed with every face the ray hits, not just the nearest.
    for (std::size_t f = 0; f < s.faces.size(); ++f) {
      const auto& t = s.faces[f];
      if (auto th = ray_triangle(o, d, s.vertices[t[0]], s.vertices[t[1]], s.vertices[t[2]])) {
        const RayHit seed{*th, static_cast<std::uint32_t>(f)};
        expect_same(bvh.intersect(o, d, 0.0, &seed), plain, mismatches);
        ++seeded;
      }
    }
  }
  EXPECT_EQ(mismatches, 0u);
  EXPECT_GT(seeded, 500u);
}

TEST(Bvh, EmptyAndMinimumDistance) {
  const Bvh empty;
  EXPECT_FALSE(empty.intersect(Point3::Zero(), Vec3::UnitX()));
  const std::vector<Point3> v{{1, -1, -1}, {1, 1, -1}, {1, 0, 1}, {3, -1, -1}, {3, 1, -1}, {3, 0, 1}};
  const std::vector<Triangle> f{{0, 1, 2}, {3, 4, 5}};
  const Bvh bvh(v, f);
  EXPECT_EQ(bvh.intersect(Point3::Zero(), Vec3::UnitX())->face, 0u);
  EXPECT_EQ(bvh.intersect(Point3::Zero(), Vec3::UnitX(), 1.5)->face, 1u);
  EXPECT_FALSE(bvh.intersect(Point3::Zero(), -Vec3::UnitX()));
}

TEST(FrameCaster, MatchesBruteForceOverFrameMesh) {
  const auto sim = simulate_frame(scenes::box_room(), ScannerSpec{}, Pose(), 0.0, 0, 4);
  const FrameMesh mesh = build_frame_mesh(sim.frame, GhprParams{});
  const FrameRayCaster caster(mesh);
  std::vector<Triangle> real;
  std::vector<std::uint32_t> ids;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    if (mesh.face_on_viewpoint[f]) continue;
    real.push_back(mesh.faces[f]);
    ids.push_back(static_cast<std::uint32_t>(f));
  }
  std::mt19937_64 rng(9);
  std::size_t mismatches = 0;
  for (int i = 0; i < 2000; ++i) {
    const Vec3 d = random_unit(rng);
    auto a = caster.cast(d);
    auto b = brute_force_nearest(mesh.points, real, Point3::Zero(), Vec3(d / d.norm()));
    if (b) b->face = ids[b->face];
    expect_same(a, b, mismatches);
    if (b && !caster.may_hit(d)) ++mismatches;
  }
  EXPECT_EQ(mismatches, 0u);
}
