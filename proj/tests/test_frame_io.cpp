#include "losmap/frame_io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace losmap;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "losmap_frame_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(FrameFiles, NumberedNames) {
  EXPECT_EQ(fs::path(frame_file("/x", 42, "mask", ".txt")).filename(), "mask_000042.txt");
}

TEST(Masks, RoundTrip) {
  DynamicMask m;
  m.frame_id = 17;
  m.labels = {PointLabel::static_point, PointLabel::dynamic_point, PointLabel::unobserved, PointLabel::static_point};
  const auto p = scratch("mask.txt").string();
  write_mask(p, m);
  const DynamicMask r = read_mask(p);
  EXPECT_EQ(r.frame_id, 17);
  EXPECT_EQ(r.labels, m.labels);
}

TEST(Masks, BadLabelNamesTheLine) {
  const auto p = scratch("bad_mask.txt").string();
  std::ofstream(p) << "# frame_id 1\n0\n1\n7\n";
  try {
    read_mask(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":4:"), std::string::npos) << e.what();
  }
}

TEST(Attributes, RoundTripWithAndWithoutLabels) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  FrameAttributes a;
  for (int i = 0; i < 50; ++i) {
    a.normals.push_back(Vec3(g(rng), g(rng), g(rng)).normalized());
    a.valid.push_back(i % 7 != 0);
    a.dynamic.push_back(i % 5 == 0);
  }
  const auto p = scratch("attr.ply").string();
  write_attributes(p, a);
  const FrameAttributes r = read_attributes(p);
  ASSERT_EQ(r.normals.size(), a.normals.size());
  for (std::size_t i = 0; i < a.normals.size(); ++i) EXPECT_LT((r.normals[i] - a.normals[i]).norm(), 1e-6);
  EXPECT_EQ(r.valid, a.valid);
  EXPECT_EQ(r.dynamic, a.dynamic);

  a.dynamic.clear();
  write_attributes(p, a);
  EXPECT_TRUE(read_attributes(p).dynamic.empty());
}

TEST(Attributes, LengthMismatchIsRejected) {
  FrameAttributes a;
  a.normals.assign(3, Vec3::UnitZ());
  a.valid.assign(2, 1);
  EXPECT_THROW(write_attributes(scratch("x.ply").string(), a), DomainError);
}
