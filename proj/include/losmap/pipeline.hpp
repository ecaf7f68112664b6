#pragma once

// Per-frame processing: mesh -> line-of-sight samples -> dynamic detection
// -> field fusion -> static integration.

#include "losmap/config.hpp"
#include "losmap/frame_mesh.hpp"
#include "losmap/los_field.hpp"
#include "losmap/static_recon.hpp"

#include <chrono>
#include <functional>
#include <optional>
#include <string>

namespace losmap {

struct FrameTiming {
  std::int64_t frame_id = 0;
  std::size_t points = 0;
  std::size_t faces = 0;
  std::size_t samples = 0;
  std::size_t dynamic = 0;
  double mesh_ms = 0.0;
  double field_ms = 0.0;   // samples, detection and fusion
  double integrate_ms = 0.0;
  double total_ms = 0.0;
  bool ok = true;
};

struct FrameResult {
  DynamicMask mask;
  FrameTiming timing;
  std::optional<FrameMesh> mesh;  // kept when requested
  std::string error;
};

class Pipeline {
 public:
  using Logger = std::function<void(const std::string&)>;

  explicit Pipeline(PipelineConfig config, Logger log = {})
      : config_(config), field_(config.field.l_vox), grid_(config.tsdf()), log_(std::move(log)) {
    config_.validate();
  }

  const PipelineConfig& config() const { return config_; }
  const LoSField& field() const { return field_; }
  const TsdfGrid& grid() const { return grid_; }

  /// Run one frame. A frame that cannot be meshed is logged and skipped: its
  /// mask is all unobserved and neither the field nor the grid changes.
  FrameResult process(const ScanFrame& frame, bool keep_mesh = false) {
    using clock = std::chrono::steady_clock;
    auto ms = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double, std::milli>(b - a).count(); };
    FrameResult r;
    r.timing.frame_id = frame.frame_id;
    r.timing.points = frame.points.size();
    r.mask.frame_id = frame.frame_id;
    r.mask.labels.assign(frame.points.size(), PointLabel::unobserved);
    const auto t0 = clock::now();
    FrameMesh mesh;
    try {
      mesh = build_frame_mesh(frame, config_.ghpr);
    } catch (const Error& e) {
      r.error = e.what();
      r.timing.ok = false;
      r.timing.total_ms = ms(t0, clock::now());
      if (log_) log_("frame " + std::to_string(frame.frame_id) + ": skipped: " + r.error);
      return r;
    }
    const auto t1 = clock::now();
    const FrameField ff = compute_frame_field(FrameRayCaster(mesh), config_.field);
    r.mask = detect_dynamic(field_, frame, ff, config_.field);
    fuse(field_, ff, config_.field);
    const auto t2 = clock::now();
    integrate(grid_, mesh, frame, &r.mask, config_.field.update_radius);
    const auto t3 = clock::now();
    r.timing.faces = mesh.faces.size();
    r.timing.samples = ff.size();
    r.timing.dynamic = r.mask.count(PointLabel::dynamic_point);
    r.timing.mesh_ms = ms(t0, t1);
    r.timing.field_ms = ms(t1, t2);
    r.timing.integrate_ms = ms(t2, t3);
    r.timing.total_ms = ms(t0, t3);
    if (keep_mesh) r.mesh = std::move(mesh);
    return r;
  }

  TriangleMesh static_mesh() const { return extract_mesh(grid_); }

 private:
  PipelineConfig config_;
  LoSField field_;
  TsdfGrid grid_;
  Logger log_;
};

}  // namespace losmap
