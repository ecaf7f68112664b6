#pragma once

// Per-frame side files: dynamic masks and per-point attributes (normals,
// labels). Both are keyed to a frame by index, so point i of the attribute
// file belongs to point i of the frame cloud.

#include "losmap/los_field.hpp"
#include "losmap/ply.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace losmap {

/// "frame_%06d" + ext under dir.
inline std::string frame_file(const std::string& dir, std::int64_t index, const char* stem, const char* ext) {
  char name[96];
  std::snprintf(name, sizeof name, "%s_%06lld%s", stem, static_cast<long long>(index), ext);
  return (std::filesystem::path(dir) / name).string();
}

/// Text mask: "# frame_id N" then one label per point (0 static, 1 dynamic,
/// 2 unobserved).
inline void write_mask(const std::string& path, const DynamicMask& m) {
  std::string s = "# frame_id " + std::to_string(m.frame_id) + "\n";
  s.reserve(s.size() + 2 * m.labels.size());
  for (auto l : m.labels) {
    s.push_back(static_cast<char>('0' + static_cast<int>(l)));
    s.push_back('\n');
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(path + ": cannot open for writing");
  std::fwrite(s.data(), 1, s.size(), f);
  const bool ok = std::ferror(f) == 0;
  std::fclose(f);
  if (!ok) throw Error(path + ": write failed");
}

inline DynamicMask read_mask(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open mask file");
  DynamicMask m;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      long long id = 0;
      if (std::sscanf(line.c_str(), "# frame_id %lld", &id) == 1) m.frame_id = id;
      continue;
    }
    if (line.size() != 1 || line[0] < '0' || line[0] > '2') {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected a label 0, 1 or 2");
    }
    m.labels.push_back(static_cast<PointLabel>(line[0] - '0'));
  }
  return m;
}

/// Per-point attributes of one frame.
struct FrameAttributes {
  std::vector<Vec3> normals;            // sensor-local
  std::vector<std::uint8_t> valid;      // normal present
  std::vector<std::uint8_t> dynamic;    // ground-truth mover hit; empty for estimates
};

/// Binary PLY with nx, ny, nz, valid and, when present, dynamic.
inline void write_attributes(const std::string& path, const FrameAttributes& a) {
  const std::size_t n = a.normals.size();
  if (a.valid.size() != n || (!a.dynamic.empty() && a.dynamic.size() != n)) {
    throw DomainError(path + ": attribute columns differ in length");
  }
  std::vector<PlyColumn> cols = xyz_columns(a.normals, "nx", "ny", "nz");
  cols.push_back({"valid", PlyColumn::Type::u8, std::vector<double>(a.valid.begin(), a.valid.end())});
  if (!a.dynamic.empty()) cols.push_back({"dynamic", PlyColumn::Type::u8, std::vector<double>(a.dynamic.begin(), a.dynamic.end())});
  write_ply(path, cols, {}, true);
}

inline FrameAttributes read_attributes(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ParseError(path + ": no such file");
  const PlyData d = read_ply(path);
  FrameAttributes a;
  a.normals = d.points("nx", "ny", "nz");
  const int cv = d.column("valid");
  const int cd = d.column("dynamic");
  a.valid.assign(a.normals.size(), 1);
  if (cv >= 0) {
    for (std::size_t i = 0; i < a.valid.size(); ++i) a.valid[i] = d.vertex_columns[static_cast<std::size_t>(cv)][i] != 0.0;
  }
  if (cd >= 0) {
    a.dynamic.resize(a.normals.size());
    for (std::size_t i = 0; i < a.dynamic.size(); ++i) a.dynamic[i] = d.vertex_columns[static_cast<std::size_t>(cd)][i] != 0.0;
  }
  return a;
}

}  // namespace losmap
