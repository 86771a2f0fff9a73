#include "pathco/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "pathco/error.hpp"
#include "pathco/severity.hpp"

namespace pathco {

namespace {

std::uint8_t code(Label c) { return static_cast<std::uint8_t>(c); }

std::vector<double> indicator(const LabelMask& m, Label c) {
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] == code(c) ? 1.0 : 0.0;
  return out;
}

std::vector<double> as_double(const VoxelGrid& g) {
  const auto v = g.values();
  return {v.begin(), v.end()};
}

// Nearest-site feature transform (flat site index, -1 if none) with
// separable lower-envelope passes; exact up to near-ties.
std::vector<std::int64_t> feature_transform(const Geometry& g, const std::vector<char>& site) {
  const Dims d = g.dims;
  const std::size_t n = g.voxel_count();
  std::vector<std::int64_t> feat(n, -1);

  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y) {
      std::int64_t last = -1;
      for (int x = 0; x < d.nx; ++x) {
        const auto i = g.index(x, y, z);
        if (site[i]) last = static_cast<std::int64_t>(i);
        feat[i] = last;
      }
      last = -1;
      for (int x = d.nx - 1; x >= 0; --x) {
        const auto i = g.index(x, y, z);
        if (site[i]) last = static_cast<std::int64_t>(i);
        if (last < 0) continue;
        const int lx = static_cast<int>(static_cast<std::size_t>(last) % d.nx);
        if (feat[i] < 0) {
          feat[i] = last;
        } else {
          const int fx = static_cast<int>(static_cast<std::size_t>(feat[i]) % d.nx);
          if (lx - x < x - fx) feat[i] = last;
        }
      }
    }

  auto coords = [&](std::int64_t idx) {
    const auto u = static_cast<std::size_t>(idx);
    return std::array<int, 3>{static_cast<int>(u % d.nx), static_cast<int>((u / d.nx) % d.ny),
                              static_cast<int>(u / (static_cast<std::size_t>(d.nx) * d.ny))};
  };

  // One envelope pass along `axis`; other passes' offsets enter through g(q).
  auto pass = [&](int axis) {
    const int len = d[axis];
    const double s = g.spacing[axis];
    const double s2 = s * s;
    std::vector<int> v(len);
    std::vector<double> zb(len + 1), gq(len);
    std::vector<std::int64_t> line(len), out(len);
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    for (int p = 0; p < d[a2]; ++p)
      for (int r = 0; r < d[a1]; ++r) {
        std::array<int, 3> c{};
        c[a1] = r;
        c[a2] = p;
        for (int q = 0; q < len; ++q) {
          c[axis] = q;
          line[q] = feat[g.index(c[0], c[1], c[2])];
          if (line[q] >= 0) {
            const auto f = coords(line[q]);
            double acc = 0.0;
            for (int ax = 0; ax < 3; ++ax) {
              if (ax == axis) continue;
              const double dd = (f[ax] - c[ax]) * g.spacing[ax];
              acc += dd * dd;
            }
            gq[q] = acc;
          }
        }
        int k = -1;
        for (int q = 0; q < len; ++q) {
          if (line[q] < 0) continue;
          const double fq = gq[q] + s2 * q * q;
          while (k >= 0) {
            const int vk = v[k];
            const double fv = gq[vk] + s2 * vk * vk;
            const double inter = (fq - fv) / (2.0 * s2 * (q - vk));
            if (inter <= zb[k]) {
              --k;
            } else {
              ++k;
              v[k] = q;
              zb[k] = inter;
              break;
            }
          }
          if (k < 0) {
            k = 0;
            v[0] = q;
            zb[0] = -std::numeric_limits<double>::infinity();
          }
        }
        if (k < 0) continue;
        zb[k + 1] = std::numeric_limits<double>::infinity();
        int j = 0;
        for (int q = 0; q < len; ++q) {
          while (zb[j + 1] < q) ++j;
          out[q] = line[v[j]];
        }
        for (int q = 0; q < len; ++q) {
          c[axis] = q;
          feat[g.index(c[0], c[1], c[2])] = out[q];
        }
      }
  };
  pass(1);
  pass(2);
  return feat;
}

void directed_distances(const Geometry& g, const std::vector<std::array<int, 3>>& from,
                        const std::vector<std::array<int, 3>>& to, std::vector<double>& out) {
  std::vector<char> site(g.voxel_count(), 0);
  for (const auto& p : to) site[g.index(p[0], p[1], p[2])] = 1;
  const auto feat = feature_transform(g, site);
  const Dims d = g.dims;
  for (const auto& p : from) {
    const auto u = static_cast<std::size_t>(feat[g.index(p[0], p[1], p[2])]);
    const double dx = (static_cast<int>(u % d.nx) - p[0]) * g.spacing.sx;
    const double dy = (static_cast<int>((u / d.nx) % d.ny) - p[1]) * g.spacing.sy;
    const double dz = (static_cast<int>(u / (static_cast<std::size_t>(d.nx) * d.ny)) - p[2]) *
                      g.spacing.sz;
    out.push_back(std::sqrt(dx * dx + dy * dy + dz * dz));
  }
}

std::vector<double> box_sums(const Dims& d, const std::vector<double>& v) {
  const int X = d.nx + 1, Y = d.ny + 1;
  std::vector<double> s(static_cast<std::size_t>(X) * Y * (d.nz + 1), 0.0);
  auto at = [&](int x, int y, int z) -> double& {
    return s[static_cast<std::size_t>(x) + static_cast<std::size_t>(X) * (y + static_cast<std::size_t>(Y) * z)];
  };
  std::size_t i = 0;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x, ++i) {
        at(x + 1, y + 1, z + 1) = v[i] + at(x, y + 1, z + 1) + at(x + 1, y, z + 1) +
                                  at(x + 1, y + 1, z) - at(x, y, z + 1) - at(x, y + 1, z) -
                                  at(x + 1, y, z) + at(x, y, z);
      }
  return s;
}

}  // namespace

double dice3d(const LabelMask& a, const LabelMask& b, Label c) {
  require_same_geometry(a.geometry(), b.geometry(), "dice3d");
  std::size_t na = 0, nb = 0, both = 0;
  const auto k = code(c);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool ia = a[i] == k, ib = b[i] == k;
    na += ia;
    nb += ib;
    both += ia && ib;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<std::array<int, 3>> boundary_voxels(const LabelMask& mask, Label c) {
  const Dims d = mask.dims();
  const auto k = code(c);
  std::vector<std::array<int, 3>> out;
  auto is_c = [&](int x, int y, int z) {
    return x >= 0 && y >= 0 && z >= 0 && x < d.nx && y < d.ny && z < d.nz && mask.at(x, y, z) == k;
  };
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        if (mask.at(x, y, z) != k) continue;
        if (!is_c(x - 1, y, z) || !is_c(x + 1, y, z) || !is_c(x, y - 1, z) || !is_c(x, y + 1, z) ||
            !is_c(x, y, z - 1) || !is_c(x, y, z + 1)) {
          out.push_back({x, y, z});
        }
      }
  return out;
}

double hd95(const LabelMask& a, const LabelMask& b, Label c) {
  require_same_geometry(a.geometry(), b.geometry(), "hd95");
  const auto ba = boundary_voxels(a, c);
  const auto bb = boundary_voxels(b, c);
  require(!ba.empty() && !bb.empty(), ErrorCode::EmptySurface,
          fmt::format("class {} has no surface in one of the masks", to_string(c)));
  std::vector<double> dist;
  dist.reserve(ba.size() + bb.size());
  directed_distances(a.geometry(), ba, bb, dist);
  directed_distances(a.geometry(), bb, ba, dist);
  std::sort(dist.begin(), dist.end());
  return percentile_of_sorted(dist, 95.0);
}

std::array<double, 3> gdl_weights(const LabelMask& target) {
  std::array<double, 3> vol{};
  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    vol[i] = static_cast<double>(target.count(kForegroundLabels[i]));
    total += vol[i];
  }
  if (total == 0.0) return {1.0, 1.0, 1.0};
  std::array<double, 3> w{};
  double wmax = 0.0;
  for (int i = 0; i < 3; ++i) {
    w[i] = vol[i] > 0 ? total / vol[i] : 0.0;
    wmax = std::max(wmax, w[i]);
  }
  for (auto& x : w) x /= wmax;
  return w;
}

double generalized_dice(const LabelMask& pred, const LabelMask& target) {
  return generalized_dice(pred, target, gdl_weights(target));
}

double generalized_dice(const LabelMask& pred, const LabelMask& target,
                        const std::array<double, 3>& weights) {
  require_same_geometry(pred.geometry(), target.geometry(), "generalized_dice");
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 3; ++i) {
    require(weights[i] >= 0 && std::isfinite(weights[i]), ErrorCode::InvalidArgument,
            "class weights must be finite and nonnegative");
    num += weights[i] * dice3d(pred, target, kForegroundLabels[i]);
    den += weights[i];
  }
  require(den > 0, ErrorCode::InvalidArgument, "class weights sum to zero");
  return 1.0 - num / den;
}

double ssim(const Geometry& geometry, std::span<const double> a, std::span<const double> b) {
  const std::size_t n = geometry.voxel_count();
  require(a.size() == n && b.size() == n, ErrorCode::GeometryMismatch,
          "ssim inputs do not match the geometry");
  const Dims d = geometry.dims;
  std::vector<double> va(a.begin(), a.end()), vb(b.begin(), b.end()), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = va[i] * va[i];
    bb[i] = vb[i] * vb[i];
    ab[i] = va[i] * vb[i];
  }
  const auto sa = box_sums(d, va), sb = box_sums(d, vb), saa = box_sums(d, aa),
             sbb = box_sums(d, bb), sab = box_sums(d, ab);
  const int X = d.nx + 1, Y = d.ny + 1;
  auto box = [&](const std::vector<double>& s, int x0, int y0, int z0, int x1, int y1, int z1) {
    auto at = [&](int x, int y, int z) {
      return s[static_cast<std::size_t>(x) + static_cast<std::size_t>(X) * (y + static_cast<std::size_t>(Y) * z)];
    };
    return at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0) + at(x0, y0, z1) +
           at(x0, y1, z0) + at(x1, y0, z0) - at(x0, y0, z0);
  };
  const int h = kSsimWindow / 2;
  double acc = 0.0;
  for (int z = 0; z < d.nz; ++z) {
    const int z0 = std::max(0, z - h), z1 = std::min(d.nz, z + h + 1);
    for (int y = 0; y < d.ny; ++y) {
      const int y0 = std::max(0, y - h), y1 = std::min(d.ny, y + h + 1);
      for (int x = 0; x < d.nx; ++x) {
        const int x0 = std::max(0, x - h), x1 = std::min(d.nx, x + h + 1);
        const double cnt = static_cast<double>((x1 - x0) * (y1 - y0) * (z1 - z0));
        const double ma = box(sa, x0, y0, z0, x1, y1, z1) / cnt;
        const double mb = box(sb, x0, y0, z0, x1, y1, z1) / cnt;
        const double vara = box(saa, x0, y0, z0, x1, y1, z1) / cnt - ma * ma;
        const double varb = box(sbb, x0, y0, z0, x1, y1, z1) / cnt - mb * mb;
        const double cov = box(sab, x0, y0, z0, x1, y1, z1) / cnt - ma * mb;
        acc += ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
               ((ma * ma + mb * mb + kSsimC1) * (vara + varb + kSsimC2));
      }
    }
  }
  return acc / static_cast<double>(n);
}

double ssim(const VoxelGrid& a, const VoxelGrid& b) {
  require_same_geometry(a.geometry(), b.geometry(), "ssim");
  return ssim(a.geometry(), as_double(a), as_double(b));
}

double ssim(const LabelMask& a, const LabelMask& b, Label c) {
  require_same_geometry(a.geometry(), b.geometry(), "ssim");
  return ssim(a.geometry(), indicator(a, c), indicator(b, c));
}

double ncc(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && !a.empty(), ErrorCode::GeometryMismatch,
          "ncc inputs differ in size");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  require(saa > 0 && sbb > 0, ErrorCode::ZeroVariance, "ncc needs nonconstant inputs");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double ncc(const VoxelGrid& a, const VoxelGrid& b) {
  require_same_geometry(a.geometry(), b.geometry(), "ncc");
  return ncc(as_double(a), as_double(b));
}

double ncc(const LabelMask& a, const LabelMask& b, Label c) {
  require_same_geometry(a.geometry(), b.geometry(), "ncc");
  return ncc(indicator(a, c), indicator(b, c));
}

double smoothness(const DeformationField& phi) {
  const Dims d = phi.geometry.dims;
  require(d.nx >= 2 && d.ny >= 2 && d.nz >= 2, ErrorCode::TooSmallGrid,
          fmt::format("smoothness needs >= 2 voxels per axis, got {}", describe(phi.geometry)));
  require(phi.displacement.size() == phi.geometry.voxel_count(), ErrorCode::GeometryMismatch,
          "deformation field size does not match its geometry");
  const Geometry& g = phi.geometry;
  double total = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    const int ex = axis == 0, ey = axis == 1, ez = axis == 2;
    double acc = 0.0;
    std::size_t count = 0;
    for (int z = 0; z + ez < d.nz; ++z)
      for (int y = 0; y + ey < d.ny; ++y)
        for (int x = 0; x + ex < d.nx; ++x) {
          const auto& p = phi.displacement[g.index(x, y, z)];
          const auto& q = phi.displacement[g.index(x + ex, y + ey, z + ez)];
          for (int c = 0; c < 3; ++c) acc += (q[c] - p[c]) * (q[c] - p[c]);
          ++count;
        }
    total += acc / static_cast<double>(count);
  }
  return total;
}

double correction_loss(const VoxelGrid& image_warp, const VoxelGrid& image_target,
                       const LabelMask& mask_warp, const LabelMask& mask_target) {
  require_same_geometry(image_warp.geometry(), image_target.geometry(), "correction_loss images");
  require_same_geometry(mask_warp.geometry(), mask_target.geometry(), "correction_loss masks");
  require_same_geometry(image_warp.geometry(), mask_warp.geometry(), "correction_loss image/mask");
  const std::size_t n = image_warp.size();
  double img = 0.0;
  for (std::size_t i = 0; i < n; ++i) img += std::abs(static_cast<double>(image_warp[i]) - image_target[i]);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < n; ++i) flips += mask_warp[i] != mask_target[i];
  // A differing label contributes two unit channel differences.
  return img / static_cast<double>(n) +
         2.0 * static_cast<double>(flips) / (static_cast<double>(kNumClasses) * static_cast<double>(n));
}

double mask_loss(const LabelMask& pred, const LabelMask& target) {
  require_same_geometry(pred.geometry(), target.geometry(), "mask_loss");
  const auto w = gdl_weights(target);
  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (w[i] == 0.0) continue;
    const Label c = kForegroundLabels[i];
    const auto ia = indicator(pred, c), ib = indicator(target, c);
    const double dice_term = 1.0 - dice3d(pred, target, c);
    const double ssim_term = 1.0 - ssim(pred.geometry(), ia, ib);
    double ncc_term;
    const bool ca = std::all_of(ia.begin(), ia.end(), [&](double v) { return v == ia[0]; });
    const bool cb = std::all_of(ib.begin(), ib.end(), [&](double v) { return v == ib[0]; });
    if (ca || cb) {
      ncc_term = ia == ib ? 0.0 : 1.0;
    } else {
      ncc_term = 1.0 - ncc(ia, ib);
    }
    total += w[i] * (dice_term + ssim_term + ncc_term);
  }
  return total;
}

CompositeLosses composite_losses(const LossComponents& c, const LossWeights& w) {
  CompositeLosses out;
  out.align = w.corr * c.corr + w.sm * c.sm;
  out.fid = w.lpips * c.lpips + w.img_ssim * c.img_ssim;
  out.mask = c.mask;
  out.total = w.align * out.align + w.fid * out.fid + w.mask * out.mask;
  return out;
}

LossComponents loss_components(const VoxelGrid& image_warp, const VoxelGrid& image_target,
                               const LabelMask& mask_warp, const LabelMask& mask_target,
                               const DeformationField& phi, const PerceptualScorer& lpips) {
  LossComponents c;
  c.corr = correction_loss(image_warp, image_target, mask_warp, mask_target);
  c.sm = smoothness(phi);
  c.img_ssim = 1.0 - ssim(image_warp, image_target);
  c.lpips = lpips ? lpips(image_warp, image_target) : 0.0;
  c.mask = mask_loss(mask_warp, mask_target);
  return c;
}

MetricReport evaluate_masks(const LabelMask& pred, const LabelMask& truth, std::string case_id) {
  require_same_geometry(pred.geometry(), truth.geometry(), "evaluate_masks");
  MetricReport r;
  r.case_id = std::move(case_id);
  double hsum = 0.0;
  int hcount = 0;
  for (int i = 0; i < 3; ++i) {
    const Label c = kReportLabels[i];
    r.dice[i] = dice3d(pred, truth, c);
    if (pred.count(c) > 0 && truth.count(c) > 0) {
      r.hd95[i] = hd95(pred, truth, c);
      hsum += *r.hd95[i];
      ++hcount;
    }
  }
  r.dice_avg = (r.dice[0] + r.dice[1] + r.dice[2]) / 3.0;
  if (hcount > 0) r.hd95_avg = hsum / hcount;
  return r;
}

MetricReport mean_report(const std::vector<MetricReport>& reports, std::string case_id) {
  require(!reports.empty(), ErrorCode::EmptyInput, "no reports to average");
  MetricReport m;
  m.case_id = std::move(case_id);
  const double n = static_cast<double>(reports.size());
  for (int i = 0; i < 3; ++i) {
    double d = 0.0, h = 0.0;
    int hc = 0;
    for (const auto& r : reports) {
      d += r.dice[i];
      if (r.hd95[i]) {
        h += *r.hd95[i];
        ++hc;
      }
    }
    m.dice[i] = d / n;
    if (hc > 0) m.hd95[i] = h / hc;
  }
  double d = 0.0, h = 0.0;
  int hc = 0;
  for (const auto& r : reports) {
    d += r.dice_avg;
    if (r.hd95_avg) {
      h += *r.hd95_avg;
      ++hc;
    }
  }
  m.dice_avg = d / n;
  if (hc > 0) m.hd95_avg = h / hc;
  return m;
}

std::string format_table(const std::vector<MetricReport>& reports) {
  std::size_t w = 4;
  for (const auto& r : reports) w = std::max(w, r.case_id.size());
  auto hd = [](const std::optional<double>& v) { return v ? fmt::format("{:>9.2f}", *v) : fmt::format("{:>9}", "-"); };
  std::string out = fmt::format("{:<{}}  {:>9} {:>9} {:>9} {:>9}  {:>9} {:>9} {:>9} {:>9}\n", "case", w,
                                "DicePool", "DiceMyo", "DiceRV", "DiceAvg", "HD95Pool", "HD95Myo",
                                "HD95RV", "HD95Avg");
  for (const auto& r : reports) {
    out += fmt::format("{:<{}}  {:>9.2f} {:>9.2f} {:>9.2f} {:>9.2f}  {} {} {} {}\n", r.case_id, w,
                       100 * r.dice[0], 100 * r.dice[1], 100 * r.dice[2], 100 * r.dice_avg,
                       hd(r.hd95[0]), hd(r.hd95[1]), hd(r.hd95[2]), hd(r.hd95_avg));
  }
  return out;
}

}  // namespace pathco
