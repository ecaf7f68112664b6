#pragma once

// Independent reference implementations used only by the tests.

#include "losmap/types.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <set>
#include <span>
#include <vector>

namespace losmap::oracle {

/// Hull vertex set by enumerating every point triple and keeping the
/// triangles whose supporting plane has all points on one side.
inline std::set<std::uint32_t> brute_force_hull_vertices(std::span<const Point3> pts, double eps) {
  std::set<std::uint32_t> verts;
  const auto n = static_cast<std::uint32_t>(pts.size());
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = i + 1; j < n; ++j) {
      for (std::uint32_t k = j + 1; k < n; ++k) {
        Vec3 nrm = (pts[j] - pts[i]).cross(pts[k] - pts[i]);
        const double len = nrm.norm();
        if (len <= eps * eps) continue;
        nrm /= len;
        bool pos = false, neg = false;
        for (std::uint32_t m = 0; m < n && !(pos && neg); ++m) {
          const double d = nrm.dot(pts[m] - pts[i]);
          if (d > eps) pos = true;
          if (d < -eps) neg = true;
        }
        if (!(pos && neg)) {
          verts.insert(i);
          verts.insert(j);
          verts.insert(k);
        }
      }
    }
  }
  return verts;
}

}  // namespace losmap::oracle
