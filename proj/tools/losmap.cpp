// losmap: simulate LiDAR sequences, run the mapping pipeline, score results.

#include "losmap/config.hpp"
#include "losmap/eval.hpp"
#include "losmap/frame_io.hpp"
#include "losmap/lidar_sim.hpp"
#include "losmap/mesh_io.hpp"
#include "losmap/pipeline.hpp"
#include "losmap/scan_io.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace losmap;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(p.string() + ": cannot create directory: " + ec.message());
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw ParseError(std::string(what) + " '" + path + "' does not exist");
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scene, scanner, traj, out;
  std::uint64_t seed = 0;
  int frames = 0;  // 0: as many as the trajectory spans
  double gt_cell = 0.05;
};

int cmd_simulate(const SimulateArgs& a) {
  require_file(a.scene, "scene");
  require_file(a.scanner, "scanner");
  require_file(a.traj, "trajectory");
  const SceneSpec scene = load_scene(a.scene);
  const ScannerSpec scanner = load_scanner(a.scanner);
  const Trajectory traj = read_trajectory(a.traj);
  if (traj.empty()) throw SpecError(a.traj + ": empty trajectory");
  int frames = a.frames;
  if (frames <= 0) frames = static_cast<int>(std::floor((traj.end_time() - traj.start_time()) * scanner.rate_hz + 1e-9)) + 1;
  if (!(a.gt_cell > 0.0)) throw SpecError("--gt-cell must be > 0");

  const auto sims = simulate(scene, scanner, traj, frames, a.seed);

  const fs::path out(a.out);
  make_dir(out / "frames");
  make_dir(out / "gt");
  Trajectory poses;
  std::string times;
  std::vector<Point3> surface;
  char buf[64];
  for (const auto& s : sims) {
    const auto id = s.frame.frame_id;
    write_frame_ply(frame_file((out / "frames").string(), id, "frame", ".ply"), s.frame);
    FrameAttributes attr;
    attr.normals = s.gt_normals;
    attr.valid.assign(s.gt_normals.size(), 1);
    attr.dynamic = s.gt_dynamic;
    write_attributes(frame_file((out / "gt").string(), id, "frame", ".ply"), attr);
    poses.push_back(s.frame.timestamp, s.frame.pose);
    std::snprintf(buf, sizeof buf, "%.17g\n", s.frame.timestamp);
    times += buf;
    for (std::size_t i = 0; i < s.gt_surface.size(); ++i) {
      if (!s.gt_dynamic[i]) surface.push_back(s.gt_surface[i]);
    }
  }
  write_trajectory((out / "trajectory.txt").string(), poses);
  {
    std::ofstream t(out / "frames" / "times.txt", std::ios::binary);
    t << times;
    if (!t) throw Error((out / "frames" / "times.txt").string() + ": write failed");
  }
  const auto gt = voxel_downsample(surface, a.gt_cell);
  write_ply((out / "gt_surface.ply").string(), xyz_columns(gt, "x", "y", "z", PlyColumn::Type::f64), {}, true);
  std::fprintf(stderr, "simulate: %d frames, %zu ground-truth surface points -> %s\n", frames, gt.size(),
               out.string().c_str());
  return kOk;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunArgs {
  std::string frames, traj, config, out, format = "ply";
  bool mesh_per_frame = false;
  bool save_normals = false;
  int dump_field_every = 0;
  double min_range = 0.5, max_range = 120.0, tolerance = 0.05;
};

int cmd_run(const RunArgs& a) {
  require_file(a.frames, "frames");
  require_file(a.traj, "trajectory");
  PipelineConfig cfg;
  if (!a.config.empty()) {
    require_file(a.config, "config");
    cfg = load_config(a.config);
  }
  if (a.dump_field_every < 0) throw SpecError("--dump-field-every must be >= 0");
  LoadOptions lo;
  lo.min_range = a.min_range;
  lo.max_range = a.max_range;
  lo.association_tolerance = a.tolerance;
  const auto frames = load_frames(a.frames, a.traj, parse_cloud_format(a.format), lo);

  const fs::path out(a.out);
  make_dir(out / "masks");
  if (a.mesh_per_frame) make_dir(out / "meshes");
  if (a.save_normals) make_dir(out / "normals");
  if (a.dump_field_every > 0) make_dir(out / "field");
  {
    std::ofstream c(out / "config.txt", std::ios::binary);
    c << format_config(cfg);
  }
  std::ofstream log(out / "run.log", std::ios::binary);
  Pipeline pipe(cfg, [&](const std::string& msg) {
    std::fprintf(stderr, "%s\n", msg.c_str());
    log << msg << "\n";
  });

  std::vector<std::vector<double>> rows;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const ScanFrame& f = frames[i];
    const bool keep = a.mesh_per_frame || a.save_normals;
    FrameResult r = pipe.process(f, keep);
    failed += !r.timing.ok;
    write_mask(frame_file((out / "masks").string(), f.frame_id, "mask", ".txt"), r.mask);
    if (r.mesh) {
      if (a.mesh_per_frame) export_mesh(frame_file((out / "meshes").string(), f.frame_id, "mesh", ".ply"), *r.mesh);
      if (a.save_normals) {
        FrameAttributes attr;
        attr.normals = r.mesh->point_normals;
        attr.valid = r.mesh->normal_valid;
        write_attributes(frame_file((out / "normals").string(), f.frame_id, "normals", ".ply"), attr);
      }
    }
    if (a.dump_field_every > 0 && (i + 1) % static_cast<std::size_t>(a.dump_field_every) == 0) {
      export_field_csv(pipe.field(), frame_file((out / "field").string(), f.frame_id, "field", ".csv"));
    }
    const auto& t = r.timing;
    rows.push_back({static_cast<double>(t.frame_id), static_cast<double>(t.points), static_cast<double>(t.faces),
                    static_cast<double>(t.samples), static_cast<double>(t.dynamic), t.mesh_ms, t.field_ms,
                    t.integrate_ms, t.total_ms, t.ok ? 1.0 : 0.0});
  }
  write_csv((out / "timing.csv").string(),
            {"frame_id", "points", "faces", "samples", "dynamic", "mesh_ms", "field_ms", "integrate_ms", "total_ms", "ok"},
            rows);
  write_mesh_ply((out / "static_mesh.ply").string(), pipe.static_mesh());
  export_field_csv(pipe.field(), (out / "field.csv").string());
  export_grid_csv(pipe.grid(), (out / "tsdf.csv").string());
  std::fprintf(stderr, "run: %zu frames (%zu skipped), %zu field voxels -> %s\n", frames.size(), failed,
               pipe.field().size(), out.string().c_str());
  return kOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string recon, gt, scene, normals, masks, truth, frames, out, csv;
  double tau_m = 0.2;
  double spacing = 0.05;
  bool pca = false;
};

/// Points of a mesh (surface samples) or of a bare cloud (its vertices).
std::vector<Point3> load_samples(const std::string& path, double spacing) {
  require_file(path, "input");
  const TriangleMesh m = read_mesh(path);
  if (m.vertices.empty()) throw ParseError(path + ": no points");
  return m.faces.empty() ? m.vertices : sample_surface(m, spacing);
}

/// Numbered files "<stem>_NNNNNN<ext>" in dir, keyed by the number.
std::map<std::int64_t, std::string> numbered_files(const std::string& dir, const std::string& ext) {
  require_file(dir, "directory");
  std::map<std::int64_t, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ext) continue;
    const std::string stem = e.path().stem().string();
    const auto us = stem.rfind('_');
    if (us == std::string::npos) continue;
    try {
      out[std::stoll(stem.substr(us + 1))] = e.path().string();
    } catch (const std::exception&) {
    }
  }
  return out;
}

int cmd_eval(const EvalArgs& a) {
  Report report;
  std::map<std::int64_t, std::vector<double>> per_frame;  // frame -> [normal_cos, pca_cos, tp, fp, fn]
  auto row = [&](std::int64_t id) -> std::vector<double>& {
    auto& r = per_frame[id];
    if (r.empty()) r.assign(5, std::nan(""));
    return r;
  };

  if (!a.recon.empty() || !a.gt.empty()) {
    if (a.recon.empty() || a.gt.empty()) throw SpecError("--recon and --gt go together");
    const auto recon = load_samples(a.recon, a.spacing);
    const auto gt = load_samples(a.gt, a.spacing);
    if (a.scene.empty()) {
      add_cloud_metrics(report, cloud_metrics(recon, gt, a.tau_m));
    } else {
      require_file(a.scene, "scene");
      const SceneSpec scene = load_scene(a.scene);
      if (scene.statics.empty()) throw SpecError(a.scene + ": no static primitives");
      std::vector<double> r2g(recon.size());
      const auto n = static_cast<std::int64_t>(recon.size());
#pragma omp parallel for schedule(static)
      for (std::int64_t i = 0; i < n; ++i) {
        r2g[static_cast<std::size_t>(i)] = static_surface_distance(scene, recon[static_cast<std::size_t>(i)]);
      }
      add_cloud_metrics(report, cloud_metrics_from(r2g, nn_distances(gt, KdTree(recon)), a.tau_m));
    }
  }

  if ((!a.normals.empty() || !a.masks.empty() || a.pca) && a.truth.empty()) {
    throw SpecError("--normals, --masks and --pca need --truth");
  }
  std::map<std::int64_t, std::string> truth;
  if (!a.truth.empty()) truth = numbered_files(a.truth, ".ply");

  auto truth_for = [&](std::int64_t id) -> FrameAttributes {
    auto it = truth.find(id);
    if (it == truth.end()) throw ParseError("no ground truth for frame " + std::to_string(id) + " in " + a.truth);
    return read_attributes(it->second);
  };

  auto add_normals = [&](const std::string& key, const std::map<std::int64_t, std::vector<Vec3>>& est,
                         const std::map<std::int64_t, std::vector<std::uint8_t>>& valid, std::size_t column) {
    double frame_sum = 0.0, pooled = 0.0;
    std::size_t frames = 0, points = 0;
    for (const auto& [id, n] : est) {
      const FrameAttributes gt = truth_for(id);
      if (gt.normals.size() != n.size()) throw ParseError("frame " + std::to_string(id) + ": normal count differs from ground truth");
      const auto s = normal_similarity(n, gt.normals, valid.at(id));
      row(id)[column] = s.mean_cosine;
      frame_sum += s.mean_cosine;
      pooled += s.mean_cosine * static_cast<double>(s.valid);
      points += s.valid;
      ++frames;
    }
    if (frames == 0) throw ParseError("no frames to compare for " + key);
    report.emplace_back(key + "_frame_mean", frame_sum / static_cast<double>(frames));
    report.emplace_back(key + "_pooled", pooled / static_cast<double>(points));
    report.emplace_back(key + "_frames", static_cast<double>(frames));
  };

  if (!a.normals.empty()) {
    std::map<std::int64_t, std::vector<Vec3>> est;
    std::map<std::int64_t, std::vector<std::uint8_t>> valid;
    for (const auto& [id, path] : numbered_files(a.normals, ".ply")) {
      FrameAttributes e = read_attributes(path);
      est[id] = std::move(e.normals);
      valid[id] = std::move(e.valid);
    }
    add_normals("normal_cosine", est, valid, 0);
  }

  if (a.pca) {
    if (a.frames.empty()) throw SpecError("--pca needs --frames");
    std::map<std::int64_t, std::vector<Vec3>> est;
    std::map<std::int64_t, std::vector<std::uint8_t>> valid;
    for (const auto& [id, path] : numbered_files(a.frames, ".ply")) {
      if (!truth.count(id)) continue;
      const auto pts = read_ply_cloud(path).points;
      est[id] = pca_normals(pts, 10);
      valid[id].assign(pts.size(), 1);
    }
    add_normals("pca_cosine", est, valid, 1);
  }

  if (!a.masks.empty()) {
    DynamicMetrics total;
    std::size_t frames = 0;
    for (const auto& [id, path] : numbered_files(a.masks, ".txt")) {
      const DynamicMask m = read_mask(path);
      const FrameAttributes gt = truth_for(id);
      if (gt.dynamic.size() != m.labels.size()) throw ParseError(path + ": label count differs from ground truth");
      const auto d = dynamic_metrics(m, gt.dynamic);
      auto& r = row(id);
      r[2] = static_cast<double>(d.tp);
      r[3] = static_cast<double>(d.fp);
      r[4] = static_cast<double>(d.fn);
      total.add(d);
      ++frames;
    }
    if (frames == 0) throw ParseError(a.masks + ": no mask files");
    add_dynamic_metrics(report, total);
  }

  if (report.empty()) throw SpecError("nothing to evaluate: give --recon/--gt, --normals, --masks or --pca");
  std::fputs(format_report(report).c_str(), stdout);
  if (!a.out.empty()) write_report(a.out, report);
  if (!a.csv.empty()) {
    std::vector<std::vector<double>> rows;
    for (const auto& [id, r] : per_frame) {
      std::vector<double> x{static_cast<double>(id)};
      x.insert(x.end(), r.begin(), r.end());
      rows.push_back(std::move(x));
    }
    write_csv(a.csv, {"frame_id", "normal_cosine", "pca_cosine", "dynamic_tp", "dynamic_fp", "dynamic_fn"}, rows);
  }
  return kOk;
}

template <class F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const SpecError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR line-of-sight mapping: simulate scans, build static maps, score results"};
  app.require_subcommand(1);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Simulate a ring-pattern LiDAR sequence with ground truth");
  sim->add_option("--scene", sa.scene, "Scene file (primitives and movers)")->required();
  sim->add_option("--scanner", sa.scanner, "Scanner file (key = value)")->required();
  sim->add_option("--traj", sa.traj, "Sensor trajectory, TUM format")->required();
  sim->add_option("--seed", sa.seed, "Noise seed")->required();
  sim->add_option("--out", sa.out, "Output directory")->required();
  sim->add_option("--frames", sa.frames, "Number of frames (default: whole trajectory at the scanner rate)");
  sim->add_option("--gt-cell", sa.gt_cell, "Cell size for downsampling the ground-truth surface, meters")
      ->capture_default_str();

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Run the mapping pipeline over a frame sequence");
  run->add_option("--frames", ra.frames, "Directory of clouds (or one cloud file)")->required();
  run->add_option("--traj", ra.traj, "Sensor trajectory, TUM format")->required();
  run->add_option("--config", ra.config, "Pipeline config (key = value); defaults when omitted");
  run->add_option("--out", ra.out, "Output directory")->required();
  run->add_flag("--mesh-per-frame", ra.mesh_per_frame, "Write each frame's mesh to meshes/");
  run->add_flag("--save-normals", ra.save_normals, "Write each frame's point normals to normals/");
  run->add_option("--dump-field-every", ra.dump_field_every, "Write a field snapshot every N frames (0: off)")
      ->capture_default_str();
  run->add_option("--format", ra.format, "Cloud format: ply, xyz or kitti_bin")->capture_default_str();
  run->add_option("--min-range", ra.min_range, "Drop points closer than this, meters")->capture_default_str();
  run->add_option("--max-range", ra.max_range, "Drop points farther than this, meters")->capture_default_str();
  run->add_option("--pose-tolerance", ra.tolerance, "Max gap between a cloud stamp and its pose, seconds")
      ->capture_default_str();

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score a reconstruction, normals or dynamic masks against ground truth");
  ev->add_option("--recon", ea.recon, "Reconstructed mesh or cloud (PLY/OBJ)");
  ev->add_option("--gt", ea.gt, "Ground-truth mesh or cloud (PLY/OBJ)");
  ev->add_option("--scene", ea.scene,
                 "Scene file; recon distances are then measured to its static surfaces instead of to --gt");
  ev->add_option("--normals", ea.normals, "Directory of estimated normals (run --save-normals)");
  ev->add_option("--masks", ea.masks, "Directory of dynamic masks (run output masks/)");
  ev->add_option("--truth", ea.truth, "Directory of per-frame ground truth (simulate output gt/)");
  ev->add_option("--frames", ea.frames, "Directory of frame clouds, for --pca");
  ev->add_flag("--pca", ea.pca, "Also score 10-NN PCA normals on --frames");
  ev->add_option("--tau-m", ea.tau_m, "Precision/recall distance threshold, meters")->capture_default_str();
  ev->add_option("--spacing", ea.spacing, "Surface sampling spacing for meshes, meters")->capture_default_str();
  ev->add_option("--report", ea.out, "Also write the key=value report here");
  ev->add_option("--csv", ea.csv, "Write per-frame rows here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (*sim) return guarded([&] { return cmd_simulate(sa); });
  if (*run) return guarded([&] { return cmd_run(ra); });
  if (*ev) return guarded([&] { return cmd_eval(ea); });
  return kUsage;
}
