#pragma once

// Triangle meshes: export (PLY / OBJ), import, and surface sampling.

#include "losmap/frame_mesh.hpp"
#include "losmap/ply.hpp"
#include "losmap/types.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace losmap {

struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<Vec3> normals;  // per vertex, may be empty
  std::vector<Triangle> faces;

  bool empty() const { return faces.empty(); }

  double face_area(std::size_t f) const {
    const auto& t = faces[f];
    return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
  }
};

enum class MeshFormat { ply, obj };

inline MeshFormat mesh_format_for(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".ply") return MeshFormat::ply;
  if (ext == ".obj") return MeshFormat::obj;
  throw SpecError(path + ": mesh extension must be .ply or .obj");
}

inline void write_obj(const std::string& path, const TriangleMesh& m) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(path + ": cannot open for writing");
  for (const auto& v : m.vertices) std::fprintf(f, "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
  const bool has_n = m.normals.size() == m.vertices.size() && !m.normals.empty();
  if (has_n) {
    for (const auto& n : m.normals) std::fprintf(f, "vn %.9g %.9g %.9g\n", n.x(), n.y(), n.z());
  }
  for (const auto& t : m.faces) {
    if (has_n) {
      std::fprintf(f, "f %u//%u %u//%u %u//%u\n", t[0] + 1, t[0] + 1, t[1] + 1, t[1] + 1, t[2] + 1, t[2] + 1);
    } else {
      std::fprintf(f, "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
    }
  }
  const bool ok = std::ferror(f) == 0;
  std::fclose(f);
  if (!ok) throw Error(path + ": write failed");
}

inline void write_mesh_ply(const std::string& path, const TriangleMesh& m, bool binary = true) {
  auto cols = xyz_columns(m.vertices);
  if (m.normals.size() == m.vertices.size() && !m.normals.empty()) {
    auto nc = xyz_columns(m.normals, "nx", "ny", "nz");
    cols.insert(cols.end(), nc.begin(), nc.end());
  }
  write_ply(path, cols, m.faces, binary);
}

inline void write_mesh(const std::string& path, const TriangleMesh& m) {
  if (mesh_format_for(path) == MeshFormat::ply) write_mesh_ply(path, m);
  else write_obj(path, m);
}

inline TriangleMesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  TriangleMesh m;
  std::vector<Vec3> vn;
  std::vector<std::uint32_t> normal_of;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    const std::string where = path + ":" + std::to_string(line_no);
    if (kw == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw ParseError(where + ": malformed vertex");
      m.vertices.emplace_back(x, y, z);
    } else if (kw == "vn") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw ParseError(where + ": malformed normal");
      vn.emplace_back(x, y, z);
    } else if (kw == "f") {
      std::vector<std::uint32_t> idx;
      std::string tok;
      while (ls >> tok) {
        long v = 0;
        try {
          v = std::stol(tok.substr(0, tok.find('/')));
        } catch (const std::exception&) {
          throw ParseError(where + ": malformed face index '" + tok + "'");
        }
        if (v < 0) v += static_cast<long>(m.vertices.size()) + 1;
        if (v < 1 || static_cast<std::size_t>(v) > m.vertices.size()) throw ParseError(where + ": face index out of range");
        idx.push_back(static_cast<std::uint32_t>(v - 1));
      }
      if (idx.size() < 3) throw ParseError(where + ": face with fewer than 3 vertices");
      for (std::size_t j = 1; j + 1 < idx.size(); ++j) m.faces.push_back({idx[0], idx[j], idx[j + 1]});
    }
  }
  if (vn.size() == m.vertices.size()) m.normals = std::move(vn);
  return m;
}

inline TriangleMesh read_mesh(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ParseError(path + ": no such file");
  if (mesh_format_for(path) == MeshFormat::obj) return read_obj(path);
  const PlyData d = read_ply(path);
  TriangleMesh m;
  m.vertices = d.points();
  if (d.has("nx") && d.has("ny") && d.has("nz")) m.normals = d.points("nx", "ny", "nz");
  m.faces = d.faces;
  return m;
}

/// World-frame copy of a frame mesh with per-point normals. Viewpoint-incident
/// faces are dropped unless `include_viewpoint_faces`, in which case the
/// sensor position is appended as the last vertex.
inline TriangleMesh to_triangle_mesh(const FrameMesh& fm, bool include_viewpoint_faces = false) {
  TriangleMesh m;
  m.vertices.reserve(fm.points.size() + 1);
  m.normals.reserve(fm.points.size() + 1);
  const Eigen::Matrix3d r = fm.pose.rotation();
  for (std::size_t i = 0; i < fm.points.size(); ++i) {
    m.vertices.push_back(to_world(fm.pose, fm.points[i]));
    m.normals.push_back(r * fm.point_normals[i]);
  }
  if (include_viewpoint_faces) {
    m.vertices.push_back(fm.pose.position);
    m.normals.push_back(Vec3::Zero());
  }
  for (std::size_t f = 0; f < fm.faces.size(); ++f) {
    if (fm.face_on_viewpoint[f] && !include_viewpoint_faces) continue;
    m.faces.push_back(fm.faces[f]);
  }
  return m;
}

inline void export_mesh(const std::string& path, const FrameMesh& fm, bool include_viewpoint_faces = false) {
  write_mesh(path, to_triangle_mesh(fm, include_viewpoint_faces));
}

/// Area-uniform surface samples with roughly one sample per `spacing`^2,
/// always including every vertex. Deterministic for a given seed.
inline std::vector<Point3> sample_surface(const TriangleMesh& m, double spacing, std::uint64_t seed = 1) {
  std::vector<Point3> out(m.vertices.begin(), m.vertices.end());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double per_area = 1.0 / (spacing * spacing);
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    const double expect = m.face_area(f) * per_area;
    auto n = static_cast<std::size_t>(expect);
    if (u(rng) < expect - static_cast<double>(n)) ++n;
    const auto& t = m.faces[f];
    for (std::size_t k = 0; k < n; ++k) {
      double a = u(rng), b = u(rng);
      if (a + b > 1.0) {
        a = 1.0 - a;
        b = 1.0 - b;
      }
      out.push_back(m.vertices[t[0]] + a * (m.vertices[t[1]] - m.vertices[t[0]]) +
                    b * (m.vertices[t[2]] - m.vertices[t[0]]));
    }
  }
  return out;
}

}  // namespace losmap
