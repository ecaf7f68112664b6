#include "losmap/config.hpp"
#include "losmap/pipeline.hpp"

#include "scenes.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace losmap;

namespace {

std::string error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_config(in, "run.cfg");
  } catch (const Error& e) {
    return e.what();
  }
  return "no error";
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  std::istringstream empty("");
  const auto d = parse_config(empty);
  EXPECT_EQ(d.field.l_vox, 0.5);
  EXPECT_EQ(d.field.update_radius, 30.0);
  EXPECT_EQ(d.ghpr.sector_count(), 12);
  EXPECT_EQ(d.tsdf().tau(), 0.75);
  EXPECT_EQ(d.tau_m, 0.2);

  std::istringstream in(
      "# run settings\n"
      "l_vox = 0.25\n"
      "update_radius=20   # meters\n"
      "w_prev = 1\nw_new = 2\n"
      "gamma = 1000\n"
      "sector_angle = 1.5707963267948966\n"
      "w_min = 0.1\ntau = 0.4\ntau_m = 0.1\n");
  const auto c = parse_config(in);
  EXPECT_EQ(c.field.l_vox, 0.25);
  EXPECT_EQ(c.field.update_radius, 20.0);
  EXPECT_EQ(c.field.w_new, 2.0);
  EXPECT_EQ(c.ghpr.gamma, 1000.0);
  EXPECT_EQ(c.ghpr.sector_count(), 4);
  EXPECT_EQ(c.ghpr.w_min, 0.1);
  EXPECT_EQ(c.tsdf().tau(), 0.4);
  EXPECT_EQ(c.tau_m, 0.1);
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_NE(error_of("l_vox = 0.5\nl_voxx = 0.5\n").find("run.cfg:2"), std::string::npos);
  EXPECT_NE(error_of("l_voxx = 0.5\n").find("unknown config key"), std::string::npos);
  EXPECT_NE(error_of("l_vox 0.5\n").find("key = value"), std::string::npos);
  EXPECT_NE(error_of("l_vox = half\n").find("not a number"), std::string::npos);
  EXPECT_NE(error_of("l_vox = -1\n").find("l_vox"), std::string::npos);
  EXPECT_NE(error_of("gamma = 0.5\n").find("gamma"), std::string::npos);
  EXPECT_NE(error_of("update_radius = 0.1\n").find("update_radius"), std::string::npos);
}

TEST(Config, FormatRoundTrips) {
  std::istringstream in("l_vox = 0.3\ngamma = 777\n");
  const auto c = parse_config(in);
  std::istringstream again(format_config(c));
  const auto d = parse_config(again);
  EXPECT_EQ(format_config(d), format_config(c));
  EXPECT_EQ(d.field.l_vox, 0.3);
  EXPECT_EQ(d.ghpr.gamma, 777.0);
}

TEST(PipelineTest, StaticRoomFramesStayStatic) {
  const auto scene = scenes::box_room();
  const auto traj = scenes::line_trajectory({-3, -1, 0}, {3, 1, 0}, 0.0, 1.0);
  const auto sims = simulate(scene, ScannerSpec{}, traj, 6, 5);
  Pipeline p(PipelineConfig{});
  std::size_t dynamic = 0, total = 0;
  for (const auto& s : sims) {
    const auto r = p.process(s.frame);
    ASSERT_TRUE(r.timing.ok);
    EXPECT_EQ(r.mask.labels.size(), s.frame.points.size());
    EXPECT_GT(r.timing.samples, 0u);
    EXPECT_GE(r.timing.total_ms, r.timing.mesh_ms);
    dynamic += r.timing.dynamic;
    total += s.frame.points.size();
  }
  EXPECT_LT(static_cast<double>(dynamic), 0.005 * static_cast<double>(total));
  EXPECT_GE(p.field().min_distance(), -0.25);
  EXPECT_FALSE(p.static_mesh().empty());
}

TEST(PipelineTest, DegenerateFrameIsSkipped) {
  std::vector<std::string> log;
  Pipeline p(PipelineConfig{}, [&](const std::string& m) { log.push_back(m); });
  ScanFrame flat;
  flat.frame_id = 3;
  for (int i = 0; i < 10; ++i) flat.points.emplace_back(1.0 + i, 0.0, 0.0);
  const auto r = p.process(flat);
  EXPECT_FALSE(r.timing.ok);
  EXPECT_EQ(r.mask.count(PointLabel::unobserved), 10u);
  ASSERT_EQ(log.size(), 1u);
  EXPECT_NE(log[0].find("frame 3"), std::string::npos);
  EXPECT_TRUE(p.field().empty());
  EXPECT_TRUE(p.grid().empty());
}
