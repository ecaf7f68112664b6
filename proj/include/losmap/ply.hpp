#pragma once

// Minimal PLY reader/writer: ASCII and binary little-endian, a vertex
// element with arbitrary scalar properties, and an optional face element
// with a list property. Enough for point clouds and triangle meshes.

#include "losmap/types.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace losmap {

static_assert(std::endian::native == std::endian::little, "binary PLY I/O assumes a little-endian host");

struct PlyData {
  std::vector<std::string> comments;
  std::vector<std::string> vertex_properties;        // declared order
  std::vector<std::vector<double>> vertex_columns;   // one column per property
  std::vector<std::array<std::uint32_t, 3>> faces;   // triangles only

  std::size_t vertex_count() const { return vertex_columns.empty() ? 0 : vertex_columns.front().size(); }

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < vertex_properties.size(); ++i) {
      if (vertex_properties[i] == name) return static_cast<int>(i);
    }
    return -1;
  }

  bool has(const std::string& name) const { return column(name) >= 0; }

  /// Value of "comment <key> <value>", if present.
  std::optional<std::string> comment_value(const std::string& key) const {
    for (const auto& c : comments) {
      std::istringstream in(c);
      std::string k, v;
      if (in >> k >> v && k == key) return v;
    }
    return std::nullopt;
  }

  std::vector<Point3> points(const char* x = "x", const char* y = "y", const char* z = "z") const {
    const int cx = column(x), cy = column(y), cz = column(z);
    if (cx < 0 || cy < 0 || cz < 0) throw ParseError(std::string("PLY lacks properties ") + x + "," + y + "," + z);
    std::vector<Point3> out(vertex_count());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = Point3(vertex_columns[static_cast<std::size_t>(cx)][i], vertex_columns[static_cast<std::size_t>(cy)][i],
                      vertex_columns[static_cast<std::size_t>(cz)][i]);
    }
    return out;
  }
};

namespace detail {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

inline PlyType ply_type(const std::string& s, const std::string& where) {
  static const std::map<std::string, PlyType> names{
      {"char", PlyType::i8},    {"int8", PlyType::i8},     {"uchar", PlyType::u8},   {"uint8", PlyType::u8},
      {"short", PlyType::i16},  {"int16", PlyType::i16},   {"ushort", PlyType::u16}, {"uint16", PlyType::u16},
      {"int", PlyType::i32},    {"int32", PlyType::i32},   {"uint", PlyType::u32},   {"uint32", PlyType::u32},
      {"float", PlyType::f32},  {"float32", PlyType::f32}, {"double", PlyType::f64}, {"float64", PlyType::f64}};
  auto it = names.find(s);
  if (it == names.end()) throw ParseError(where + ": unknown PLY type '" + s + "'");
  return it->second;
}

inline std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::i8: case PlyType::u8: return 1;
    case PlyType::i16: case PlyType::u16: return 2;
    case PlyType::i32: case PlyType::u32: case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

template <class T>
double load_as(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return static_cast<double>(v);
}

inline double ply_load(PlyType t, const char* p) {
  switch (t) {
    case PlyType::i8: return load_as<std::int8_t>(p);
    case PlyType::u8: return load_as<std::uint8_t>(p);
    case PlyType::i16: return load_as<std::int16_t>(p);
    case PlyType::u16: return load_as<std::uint16_t>(p);
    case PlyType::i32: return load_as<std::int32_t>(p);
    case PlyType::u32: return load_as<std::uint32_t>(p);
    case PlyType::f32: return load_as<float>(p);
    case PlyType::f64: return load_as<double>(p);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

}  // namespace detail

inline PlyData read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open file");
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  PlyData out;
  std::vector<detail::PlyElement> elements;
  bool binary = false;
  std::size_t pos = 0;
  int line_no = 0;
  auto next_line = [&]() -> std::string {
    if (pos >= data.size()) throw ParseError(path + ":" + std::to_string(line_no + 1) + ": unexpected end of header");
    auto e = data.find('\n', pos);
    if (e == std::string::npos) e = data.size();
    std::string l = data.substr(pos, e - pos);
    pos = e + 1;
    ++line_no;
    if (!l.empty() && l.back() == '\r') l.pop_back();
    return l;
  };
  if (next_line() != "ply") throw ParseError(path + ":1: missing 'ply' magic");
  for (;;) {
    const std::string line = next_line();
    const std::string where = path + ":" + std::to_string(line_no);
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw == "comment" || kw == "obj_info") {
      out.comments.push_back(line.size() > kw.size() + 1 ? line.substr(kw.size() + 1) : std::string());
    } else if (kw == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else throw ParseError(where + ": unsupported PLY format '" + fmt + "'");
    } else if (kw == "element") {
      detail::PlyElement e;
      long long n = -1;
      ls >> e.name >> n;
      if (n < 0) throw ParseError(where + ": bad element count");
      e.count = static_cast<std::size_t>(n);
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) throw ParseError(where + ": property before element");
      detail::PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, vt;
        ls >> ct >> vt >> p.name;
        p.is_list = true;
        p.count_type = detail::ply_type(ct, where);
        p.type = detail::ply_type(vt, where);
      } else {
        p.type = detail::ply_type(t, where);
        ls >> p.name;
      }
      if (p.name.empty()) throw ParseError(where + ": property without a name");
      elements.back().props.push_back(p);
    } else if (!kw.empty()) {
      throw ParseError(where + ": unexpected header keyword '" + kw + "'");
    }
  }

  std::istringstream ascii;
  int body_line = line_no;
  if (!binary) ascii.str(data.substr(pos));
  std::string ascii_line;
  std::istringstream cur;
  auto ascii_next_record = [&]() {
    do {
      if (!std::getline(ascii, ascii_line)) {
        throw ParseError(path + ":" + std::to_string(body_line + 1) + ": unexpected end of data");
      }
      ++body_line;
    } while (ascii_line.find_first_not_of(" \t\r") == std::string::npos);
    cur.clear();
    cur.str(ascii_line);
  };
  auto ascii_value = [&]() {
    double v;
    if (!(cur >> v)) throw ParseError(path + ":" + std::to_string(body_line) + ": malformed number");
    return v;
  };
  auto bin_value = [&](detail::PlyType t) {
    const std::size_t sz = detail::ply_size(t);
    if (pos + sz > data.size()) {
      throw ParseError(path + ": truncated binary data at byte offset " + std::to_string(pos));
    }
    const double v = detail::ply_load(t, data.data() + pos);
    pos += sz;
    return v;
  };

  for (const auto& e : elements) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    if (is_vertex) {
      for (const auto& p : e.props) {
        if (p.is_list) throw ParseError(path + ": list property in vertex element");
        out.vertex_properties.push_back(p.name);
      }
      out.vertex_columns.assign(e.props.size(), std::vector<double>(e.count));
    }
    for (std::size_t r = 0; r < e.count; ++r) {
      if (!binary) ascii_next_record();
      for (std::size_t k = 0; k < e.props.size(); ++k) {
        const auto& p = e.props[k];
        if (p.is_list) {
          const std::size_t at = pos;
          const double nd = binary ? bin_value(p.count_type) : ascii_value();
          if (nd < 0) throw ParseError(path + ": negative list length");
          const auto n = static_cast<std::size_t>(nd);
          std::vector<std::uint32_t> idx(n);
          for (std::size_t j = 0; j < n; ++j) idx[j] = static_cast<std::uint32_t>(binary ? bin_value(p.type) : ascii_value());
          if (is_face && p.name.rfind("vertex_ind", 0) == 0) {
            if (n < 3) {
              throw ParseError(binary ? path + ": face with fewer than 3 vertices at byte offset " + std::to_string(at)
                                      : path + ":" + std::to_string(body_line) + ": face with fewer than 3 vertices");
            }
            for (std::size_t j = 1; j + 1 < n; ++j) out.faces.push_back({idx[0], idx[j], idx[j + 1]});
          }
        } else {
          const double v = binary ? bin_value(p.type) : ascii_value();
          if (is_vertex) out.vertex_columns[k][r] = v;
        }
      }
    }
  }
  const std::size_t nv = out.vertex_count();
  for (const auto& f : out.faces) {
    for (auto v : f) {
      if (v >= nv) throw ParseError(path + ": face references vertex " + std::to_string(v) + " of " + std::to_string(nv));
    }
  }
  return out;
}

struct PlyColumn {
  std::string name;
  enum class Type { f32, f64, u8 } type = Type::f32;
  std::vector<double> values;
};

/// Write a vertex element (given columns) plus optional triangle faces.
inline void write_ply(const std::string& path, const std::vector<PlyColumn>& columns,
                      const std::vector<std::array<std::uint32_t, 3>>& faces, bool binary,
                      const std::vector<std::string>& comments = {}) {
  const std::size_t n = columns.empty() ? 0 : columns.front().values.size();
  for (const auto& c : columns) {
    if (c.values.size() != n) throw DomainError("write_ply: column '" + c.name + "' length mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open for writing");
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  for (const auto& c : comments) out << "comment " << c << "\n";
  out << "element vertex " << n << "\n";
  for (const auto& c : columns) {
    const char* t = c.type == PlyColumn::Type::f32 ? "float" : c.type == PlyColumn::Type::f64 ? "double" : "uchar";
    out << "property " << t << " " << c.name << "\n";
  }
  if (!faces.empty()) out << "element face " << faces.size() << "\nproperty list uchar uint vertex_indices\n";
  out << "end_header\n";
  if (binary) {
    std::string buf;
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& c : columns) {
        if (c.type == PlyColumn::Type::f32) {
          const auto v = static_cast<float>(c.values[i]);
          buf.append(reinterpret_cast<const char*>(&v), sizeof v);
        } else if (c.type == PlyColumn::Type::f64) {
          buf.append(reinterpret_cast<const char*>(&c.values[i]), sizeof(double));
        } else {
          buf.push_back(static_cast<char>(static_cast<std::uint8_t>(c.values[i])));
        }
      }
    }
    for (const auto& f : faces) {
      buf.push_back(3);
      buf.append(reinterpret_cast<const char*>(f.data()), 3 * sizeof(std::uint32_t));
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  } else {
    out << std::setprecision(9);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < columns.size(); ++k) {
        const auto& c = columns[k];
        if (k) out << ' ';
        if (c.type == PlyColumn::Type::f32) out << static_cast<float>(c.values[i]);
        else if (c.type == PlyColumn::Type::f64) out << std::setprecision(17) << c.values[i] << std::setprecision(9);
        else out << static_cast<int>(c.values[i]);
      }
      out << '\n';
    }
    for (const auto& f : faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  }
  if (!out) throw Error(path + ": write failed");
}

inline std::vector<PlyColumn> xyz_columns(const std::vector<Point3>& pts, const char* x = "x", const char* y = "y",
                                          const char* z = "z", PlyColumn::Type type = PlyColumn::Type::f32) {
  std::vector<PlyColumn> cols{{x, type, {}}, {y, type, {}}, {z, type, {}}};
  for (auto& c : cols) c.values.reserve(pts.size());
  for (const auto& p : pts) {
    cols[0].values.push_back(p.x());
    cols[1].values.push_back(p.y());
    cols[2].values.push_back(p.z());
  }
  return cols;
}

}  // namespace losmap
