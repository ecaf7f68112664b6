#pragma once

// Pipeline configuration: "key = value" text files.
//
// Keys: l_vox, update_radius, w_prev, w_new (field); gamma, sector_angle
// (radians), w_min (meshing); tau (reconstruction truncation, 0 = 1.5 l_vox);
// tau_m (evaluation distance threshold). '#' starts a comment.

#include "losmap/frame_mesh.hpp"
#include "losmap/lidar_sim.hpp"
#include "losmap/los_field.hpp"
#include "losmap/static_recon.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace losmap {

struct PipelineConfig {
  GhprParams ghpr;
  FieldParams field;
  double tau = 0.0;
  double tau_m = 0.2;

  TsdfParams tsdf() const { return {field.l_vox, tau, field.update_radius}; }

  void validate() {
    ghpr.normalize();
    field.validate();
    tsdf().validate();
    if (!(tau_m > 0.0)) throw DomainError("tau_m must be > 0");
  }
};

inline PipelineConfig parse_config(std::istream& in, const std::string& source = "config") {
  PipelineConfig c;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::strip_comment(raw);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected 'key = value'");
    const std::string key = detail::strip_comment(line.substr(0, eq));
    const std::string val = detail::strip_comment(line.substr(eq + 1));
    double x = 0.0;
    try {
      std::size_t used = 0;
      x = std::stod(val, &used);
      if (used != val.size()) throw std::invalid_argument(val);
    } catch (const std::exception&) {
      throw ParseError(where + ": value for '" + key + "' is not a number");
    }
    if (key == "l_vox") c.field.l_vox = x;
    else if (key == "update_radius") c.field.update_radius = x;
    else if (key == "w_prev") c.field.w_prev = x;
    else if (key == "w_new") c.field.w_new = x;
    else if (key == "gamma") c.ghpr.gamma = x;
    else if (key == "sector_angle") c.ghpr.sector_angle = x;
    else if (key == "w_min") c.ghpr.w_min = x;
    else if (key == "tau") c.tau = x;
    else if (key == "tau_m") c.tau_m = x;
    else throw ParseError(where + ": unknown config key '" + key + "'");
  }
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw DomainError(source + ": " + e.what());
  }
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open config file");
  return parse_config(in, path);
}

inline std::string format_config(const PipelineConfig& c) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "l_vox = %.17g\nupdate_radius = %.17g\nw_prev = %.17g\nw_new = %.17g\n"
                "gamma = %.17g\nsector_angle = %.17g\nw_min = %.17g\ntau = %.17g\ntau_m = %.17g\n",
                c.field.l_vox, c.field.update_radius, c.field.w_prev, c.field.w_new, c.ghpr.gamma,
                c.ghpr.sector_angle, c.ghpr.w_min, c.tsdf().tau(), c.tau_m);
  return buf;
}

}  // namespace losmap
