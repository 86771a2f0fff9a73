#pragma once

// Brute-force reference implementations used to check the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "pathco/volume.hpp"

namespace oracle {

using namespace pathco;

inline std::vector<std::array<int, 3>> surface(const LabelMask& m, Label c) {
  const auto& d = m.geometry().dims;
  const auto k = static_cast<std::uint8_t>(c);
  auto inside = [&](int x, int y, int z) {
    if (x < 0 || y < 0 || z < 0 || x >= d.nx || y >= d.ny || z >= d.nz) return false;
    return m.at(x, y, z) == k;
  };
  static constexpr int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<std::array<int, 3>> out;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        if (!inside(x, y, z)) continue;
        bool edge = false;
        for (const auto& o : off) edge = edge || !inside(x + o[0], y + o[1], z + o[2]);
        if (edge) out.push_back({x, y, z});
      }
  return out;
}

/// All-pairs HD95; NaN when a surface is empty.
inline double hd95(const LabelMask& a, const LabelMask& b, Label c) {
  const auto sa = surface(a, c), sb = surface(b, c);
  if (sa.empty() || sb.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto& s = a.geometry().spacing;
  std::vector<double> pooled;
  auto directed = [&](const auto& from, const auto& to) {
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        const double dx = (q[0] - p[0]) * s.sx, dy = (q[1] - p[1]) * s.sy, dz = (q[2] - p[2]) * s.sz;
        best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
      }
      pooled.push_back(best);
    }
  };
  directed(sa, sb);
  directed(sb, sa);
  std::sort(pooled.begin(), pooled.end());
  const double r = 0.95 * static_cast<double>(pooled.size() - 1);
  const auto lo = static_cast<std::size_t>(r);
  if (lo + 1 >= pooled.size() || r == static_cast<double>(lo)) return pooled[lo];
  return pooled[lo] + (pooled[lo + 1] - pooled[lo]) * (r - static_cast<double>(lo));
}

inline double dice(const LabelMask& a, const LabelMask& b, Label c) {
  const auto k = static_cast<std::uint8_t>(c);
  double inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] == k && b[i] == k;
    na += a[i] == k;
    nb += b[i] == k;
  }
  return na + nb == 0 ? 1.0 : 2 * inter / (na + nb);
}

/// Windowed SSIM evaluated voxel by voxel.
inline double ssim(const Geometry& g, const std::vector<double>& a, const std::vector<double>& b,
                   int window, double c1, double c2) {
  const auto& d = g.dims;
  const int h = window / 2;
  double total = 0;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        std::vector<std::size_t> idx;
        for (int k = std::max(0, z - h); k <= std::min(d.nz - 1, z + h); ++k)
          for (int j = std::max(0, y - h); j <= std::min(d.ny - 1, y + h); ++j)
            for (int i = std::max(0, x - h); i <= std::min(d.nx - 1, x + h); ++i) idx.push_back(g.index(i, j, k));
        const double n = static_cast<double>(idx.size());
        double ma = 0, mb = 0;
        for (auto i : idx) {
          ma += a[i];
          mb += b[i];
        }
        ma /= n;
        mb /= n;
        double va = 0, vb = 0, cv = 0;
        for (auto i : idx) {
          va += (a[i] - ma) * (a[i] - ma);
          vb += (b[i] - mb) * (b[i] - mb);
          cv += (a[i] - ma) * (b[i] - mb);
        }
        va /= n;
        vb /= n;
        cv /= n;
        total += (2 * ma * mb + c1) * (2 * cv + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      }
  return total / static_cast<double>(g.voxel_count());
}

}  // namespace oracle
