#include "pathco/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "pathco/error.hpp"
#include "pathco/rng.hpp"

namespace pathco {

using Mat3 = std::array<std::array<double, 3>, 3>;

void LatentVector::validate() const {
  for (double v : params) {
    require(std::isfinite(v), ErrorCode::InvalidArgument, "latent slot is not finite");
  }
  require(params[LongSemiAxis] > 0 && params[ShortSemiAxisA] > 0 && params[ShortSemiAxisB] > 0,
          ErrorCode::InvalidArgument, "semi-axes must be > 0");
  require(params[WallThickness] >= 0, ErrorCode::InvalidArgument, "wall thickness must be >= 0");
  require(params[RvScale] >= 0, ErrorCode::InvalidArgument, "RV scale must be >= 0");
  for (auto slot : {PoolIntensity, MyoIntensity}) {
    require(params[slot] >= 0 && params[slot] <= 1, ErrorCode::InvalidArgument,
            "intensities must lie in [0,1]");
  }
}

LatentVector LatentVector::make(double L, double a, double b, double t, double s, double phi,
                                 double pool_intensity, double myo_intensity) {
  LatentVector z;
  z.params = {L, a, b, t, s, phi, pool_intensity, myo_intensity};
  return z;
}

Mat3 phantom_tilt() {
  // Rz(0.37) * Ry(0.23) * Rx(0.11): oblique enough that voxel centers do not
  // line up with any structure axis.
  static const Mat3 r = [] {
    const double cz = std::cos(0.37), sz = std::sin(0.37);
    const double cy = std::cos(0.23), sy = std::sin(0.23);
    const double cx = std::cos(0.11), sx = std::sin(0.11);
    const Mat3 rz{{{cz, -sz, 0}, {sz, cz, 0}, {0, 0, 1}}};
    const Mat3 ry{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
    const Mat3 rx{{{1, 0, 0}, {0, cx, -sx}, {0, sx, cx}}};
    auto mul = [](const Mat3& p, const Mat3& q) {
      Mat3 out{};
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          for (int k = 0; k < 3; ++k) out[i][j] += p[i][k] * q[k][j];
      return out;
    };
    return mul(mul(rz, ry), rx);
  }();
  return r;
}

std::array<double, 3> phantom_center(const Geometry& grid) {
  // Shifted away from the default RV side to leave it room, and off the
  // lattice's symmetry point so opposite surfaces quantize independently.
  const auto r = phantom_tilt();
  auto c = grid.center();
  const double rv_dir[2] = {std::cos(kDefaultRvAngle), std::sin(kDefaultRvAngle)};
  const double frac[3] = {0.31, 0.17, 0.23};
  for (int i = 0; i < 3; ++i) {
    const double extent = (grid.dims[i] - 1) * grid.spacing[i];
    const double dir = r[i][0] * rv_dir[0] + r[i][1] * rv_dir[1];
    c[i] += frac[i] * grid.spacing[i] - 0.07 * extent * dir;
  }
  return c;
}

double phantom_pool_volume(const LatentVector& z) {
  return 4.0 / 3.0 * std::numbers::pi * z[0] * z[1] * z[2];
}

double phantom_myo_volume(const LatentVector& z) {
  const double t = z[LatentVector::WallThickness];
  return 4.0 / 3.0 * std::numbers::pi * (z[0] + t) * (z[1] + t) * (z[2] + t) -
         phantom_pool_volume(z);
}

double phantom_rv_volume(const LatentVector& z) {
  const double t = z[LatentVector::WallThickness];
  const double s = z[LatentVector::RvScale];
  return 0.5 * 4.0 / 3.0 * std::numbers::pi * (z[0] + t) * (z[1] + t) * (z[2] + t) *
         ((1 + s) * (1 + s) - 1);
}

namespace {

struct Shape {
  double a, b, L;     // pool
  double A, B, C;     // epicardium
  double ra, rb;      // RV outer in-plane semi-axes
  double cphi, sphi;
  bool has_rv;

  explicit Shape(const LatentVector& z)
      : a(z[LatentVector::ShortSemiAxisA]),
        b(z[LatentVector::ShortSemiAxisB]),
        L(z[LatentVector::LongSemiAxis]),
        A(a + z[LatentVector::WallThickness]),
        B(b + z[LatentVector::WallThickness]),
        C(L + z[LatentVector::WallThickness]),
        ra(A * (1 + z[LatentVector::RvScale])),
        rb(B * (1 + z[LatentVector::RvScale])),
        cphi(std::cos(z[LatentVector::RvAngle])),
        sphi(std::sin(z[LatentVector::RvAngle])),
        has_rv(z[LatentVector::RvScale] > 0) {}

  static double quad(double x, double y, double z, double ex, double ey, double ez) {
    return (x / ex) * (x / ex) + (y / ey) * (y / ey) + (z / ez) * (z / ez);
  }
  bool in_pool(double x, double y, double z) const { return quad(x, y, z, a, b, L) <= 1.0; }
  bool in_outer(double x, double y, double z) const { return quad(x, y, z, A, B, C) <= 1.0; }
  bool in_rv_hull(double x, double y, double z) const {
    return has_rv && x * cphi + y * sphi > 0.0 && quad(x, y, z, ra, rb, C) <= 1.0;
  }
  std::uint8_t classify(double x, double y, double z) const {
    if (in_pool(x, y, z)) return static_cast<std::uint8_t>(Label::Pool);
    if (in_outer(x, y, z)) return static_cast<std::uint8_t>(Label::Myo);
    if (in_rv_hull(x, y, z)) return static_cast<std::uint8_t>(Label::RV);
    return static_cast<std::uint8_t>(Label::Background);
  }
};

// LV-frame coordinates of a voxel center.
struct Frame {
  Mat3 r = phantom_tilt();
  std::array<double, 3> c;
  const Geometry& g;

  explicit Frame(const Geometry& geometry) : c(phantom_center(geometry)), g(geometry) {}

  std::array<double, 3> operator()(int x, int y, int z) const {
    const auto p = g.position(x, y, z);
    const double d[3] = {p[0] - c[0], p[1] - c[1], p[2] - c[2]};
    std::array<double, 3> q{};
    for (int j = 0; j < 3; ++j) q[j] = r[0][j] * d[0] + r[1][j] * d[1] + r[2][j] * d[2];
    return q;
  }
};

double texture(std::uint64_t seed, std::size_t index) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index)));
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return kTextureAmplitude * (2.0 * u - 1.0);
}

}  // namespace

Phase decode(const LatentVector& z, const Geometry& grid, std::uint64_t texture_seed) {
  z.validate();
  validate_geometry(grid);
  const Shape shape(z);
  const Frame frame(grid);
  const double blood = z[LatentVector::PoolIntensity];
  const double myo = z[LatentVector::MyoIntensity];
  std::vector<float> values(grid.voxel_count());
  std::vector<std::uint8_t> labels(grid.voxel_count());
  for (int k = 0; k < grid.dims.nz; ++k) {
    for (int j = 0; j < grid.dims.ny; ++j) {
      for (int i = 0; i < grid.dims.nx; ++i) {
        const auto q = frame(i, j, k);
        const auto idx = grid.index(i, j, k);
        const auto label = shape.classify(q[0], q[1], q[2]);
        labels[idx] = label;
        const double base = label == static_cast<std::uint8_t>(Label::Myo)  ? myo
                            : label == static_cast<std::uint8_t>(Label::Background) ? kBackgroundIntensity
                                                                                    : blood;
        values[idx] = static_cast<float>(std::clamp(base + texture(texture_seed, idx), 0.0, 1.0));
      }
    }
  }
  LabelMask mask(grid, std::move(labels));
  const auto& d = grid.dims;
  for (int k = 0; k < d.nz; ++k)
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        const bool border = i == 0 || j == 0 || k == 0 || i == d.nx - 1 || j == d.ny - 1 || k == d.nz - 1;
        if (border && mask.at(i, j, k) != 0) {
          fail(ErrorCode::PhantomExceedsGrid,
               fmt::format("phantom reaches the border of grid {} at voxel ({}, {}, {})",
                           describe(grid), i, j, k));
        }
      }
  return {VoxelGrid(grid, std::move(values)), std::move(mask)};
}

std::size_t phantom_mismatch(const LatentVector& z, const LabelMask& mask) {
  const auto decoded = decode(z, mask.geometry());
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) n += decoded.mask[i] != mask[i];
  return n;
}

namespace {

// Voxels of a bounding region with their LV-frame coordinates and labels.
struct Samples {
  std::vector<std::array<double, 3>> q;
  std::vector<std::uint8_t> label;
};

Samples collect(const LabelMask& mask) {
  const auto& g = mask.geometry();
  int lo[3] = {g.dims.nx, g.dims.ny, g.dims.nz};
  int hi[3] = {-1, -1, -1};
  for (int k = 0; k < g.dims.nz; ++k)
    for (int j = 0; j < g.dims.ny; ++j)
      for (int i = 0; i < g.dims.nx; ++i) {
        if (mask.at(i, j, k) == 0) continue;
        const int v[3] = {i, j, k};
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], v[a]);
          hi[a] = std::max(hi[a], v[a]);
        }
      }
  for (int a = 0; a < 3; ++a) {
    const int pad = std::max(3, (hi[a] - lo[a] + 1) / 6);
    lo[a] = std::max(0, lo[a] - pad);
    hi[a] = std::min(g.dims[a] - 1, hi[a] + pad);
  }
  const Frame frame(g);
  Samples s;
  for (int k = lo[2]; k <= hi[2]; ++k)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int i = lo[0]; i <= hi[0]; ++i) {
        s.q.push_back(frame(i, j, k));
        s.label.push_back(mask.at(i, j, k));
      }
  return s;
}

enum class Stage { Pool, Outer, Full };

std::size_t point_cost(const Shape& shape, const std::array<double, 3>& q, std::uint8_t label,
                       Stage stage) {
  const auto pool = static_cast<std::uint8_t>(Label::Pool);
  const auto myo = static_cast<std::uint8_t>(Label::Myo);
  switch (stage) {
    case Stage::Pool: return (label == pool) != shape.in_pool(q[0], q[1], q[2]);
    case Stage::Outer:
      return (label == pool || label == myo) != shape.in_outer(q[0], q[1], q[2]);
    case Stage::Full: return label != shape.classify(q[0], q[1], q[2]);
  }
  return 0;
}

// Points whose classification can change under small parameter moves, plus
// the fixed mismatch of all other points.
struct Active {
  std::vector<std::size_t> index;
  std::size_t fixed = 0;
};

Active active_set(const Samples& s, const LatentVector& z, Stage stage) {
  const Shape shape(z);
  auto near = [](double v) { return v > 0.6 && v < 1.6; };
  Active act;
  for (std::size_t i = 0; i < s.q.size(); ++i) {
    const auto& q = s.q[i];
    const double qp = Shape::quad(q[0], q[1], q[2], shape.a, shape.b, shape.L);
    const double qo = Shape::quad(q[0], q[1], q[2], shape.A, shape.B, shape.C);
    bool live = false;
    switch (stage) {
      case Stage::Pool: live = near(qp); break;
      case Stage::Outer: live = near(qo); break;
      case Stage::Full:
        live = near(qp) || near(qo) ||
               (qo > 0.6 && Shape::quad(q[0], q[1], q[2], shape.ra, shape.rb, shape.C) < 1.6);
        break;
    }
    if (live) {
      act.index.push_back(i);
    } else {
      act.fixed += point_cost(shape, q, s.label[i], stage);
    }
  }
  return act;
}

std::size_t stage_cost(const Samples& s, const Active& act, const LatentVector& z, Stage stage) {
  const Shape shape(z);
  std::size_t n = act.fixed;
  for (std::size_t i : act.index) n += point_cost(shape, s.q[i], s.label[i], stage);
  return n;
}

std::size_t stage_cost(const Samples& s, const LatentVector& z, Stage stage) {
  const Shape shape(z);
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.q.size(); ++i) n += point_cost(shape, s.q[i], s.label[i], stage);
  return n;
}

bool admissible(const LatentVector& z) {
  return z[0] > 0 && z[1] > 0 && z[2] > 0 && z[3] >= 0 && z[4] >= 0;
}

// Compass search over the given slots with per-slot line scans; steps halve
// whenever a sweep fails to lower the mismatch count. Stalls are escaped with
// seeded random joint moves.
std::size_t compass(const Samples& s, const Active& act, LatentVector& z,
                    const std::vector<int>& slots, Stage stage) {
  std::size_t best = stage_cost(s, act, z, stage);
  std::array<double, LatentVector::kSize> base{};
  for (int slot : slots) {
    switch (slot) {
      case LatentVector::WallThickness: base[slot] = 0.05 * std::max(z[slot], 1.0); break;
      case LatentVector::RvScale: base[slot] = 0.05 * std::max(z[slot], 0.1); break;
      case LatentVector::RvAngle: base[slot] = 0.05; break;
      default: base[slot] = 0.02 * z[slot]; break;
    }
  }
  auto step = base;
  Rng rng(0x5eed);
  int escapes = 0;
  for (int sweep = 0; sweep < 400 && best > 0; ++sweep) {
    bool improved = false;
    for (int slot : slots) {
      double best_value = z[slot];
      for (int k = -4; k <= 4; ++k) {
        if (k == 0) continue;
        LatentVector c = z;
        c[slot] = z[slot] + k * step[slot];
        if (!admissible(c)) continue;
        const auto cost = stage_cost(s, act, c, stage);
        if (cost < best) {
          best = cost;
          best_value = c[slot];
        }
      }
      if (best_value != z[slot]) {
        z[slot] = best_value;
        improved = true;
        if (best == 0) return 0;
      }
    }
    if (improved) continue;
    bool any = false;
    for (int slot : slots) {
      step[slot] *= 0.5;
      any = any || step[slot] > 1e-4 * base[slot];
    }
    if (any) continue;
    if (++escapes > 6) break;
    bool escaped = false;
    for (int trial = 0; trial < 300 && !escaped; ++trial) {
      const double scale = 0.02 * std::pow(2.0, -(trial % 6));
      LatentVector c = z;
      for (int slot : slots) c[slot] += scale / 0.02 * base[slot] * 0.1 * (2.0 * rng.uniform() - 1.0);
      if (!admissible(c)) continue;
      const auto cost = stage_cost(s, act, c, stage);
      if (cost < best) {
        best = cost;
        z = c;
        escaped = true;
      }
    }
    if (!escaped) break;
    step = base;
    for (int slot : slots) step[slot] *= 0.125;
  }
  return best;
}

void refine(const Samples& s, LatentVector& z, std::vector<int> slots, Stage stage) {
  // The active set is rebuilt until the parameters settle.
  for (int round = 0; round < 4; ++round) {
    if (stage_cost(s, z, stage) == 0) return;
    const Active act = active_set(s, z, stage);
    const LatentVector before = z;
    compass(s, act, z, slots, stage);
    if (z == before) return;
  }
}

// Squared-hinge residuals of every classification constraint, four slots per
// active point: pool, epicardium, RV side, RV hull. All vanish exactly when
// the rasterization reproduces the labels.
void hinge_residuals(const Samples& s, const std::vector<std::size_t>& active,
                     const LatentVector& z, Eigen::VectorXd& r) {
  constexpr double eps = 1e-7;
  const Shape sh(z);
  const auto pool = static_cast<std::uint8_t>(Label::Pool);
  const auto myo = static_cast<std::uint8_t>(Label::Myo);
  const auto rv = static_cast<std::uint8_t>(Label::RV);
  r.setZero(static_cast<Eigen::Index>(4 * active.size()));
  for (std::size_t n = 0; n < active.size(); ++n) {
    const auto& q = s.q[active[n]];
    const auto lab = s.label[active[n]];
    const double P = Shape::quad(q[0], q[1], q[2], sh.a, sh.b, sh.L);
    const double O = Shape::quad(q[0], q[1], q[2], sh.A, sh.B, sh.C);
    const auto k = static_cast<Eigen::Index>(4 * n);
    r[k] = lab == pool ? std::max(0.0, P - (1 - eps)) : std::max(0.0, (1 + eps) - P);
    const bool lv = lab == pool || lab == myo;
    r[k + 1] = lv ? std::max(0.0, O - (1 - eps)) : std::max(0.0, (1 + eps) - O);
    if (lv) continue;
    const double R = Shape::quad(q[0], q[1], q[2], sh.ra, sh.rb, sh.C);
    const double d = (q[0] * sh.cphi + q[1] * sh.sphi) / std::max(sh.ra, sh.rb);
    if (lab == rv) {
      r[k + 2] = std::max(0.0, eps - d);
      r[k + 3] = std::max(0.0, R - (1 - eps));
    } else {
      // Background needs only one of the two conditions; charge the cheaper.
      const double side = std::max(0.0, d + eps);
      const double hull = std::max(0.0, (1 + eps) - R);
      if (side <= hull) {
        r[k + 2] = side;
      } else {
        r[k + 3] = hull;
      }
    }
  }
}

// Levenberg-Marquardt on the hinge residuals until the labels match exactly.
void fit_exact(const Samples& s, LatentVector& z, const std::vector<int>& slots) {
  const Active act = active_set(s, z, Stage::Full);
  const auto m = static_cast<Eigen::Index>(slots.size());
  Eigen::VectorXd r, r_try, r_step;
  hinge_residuals(s, act.index, z, r);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  Eigen::MatrixXd J(r.size(), m);
  for (int iter = 0; iter < 60 && cost > 0; ++iter) {
    if (stage_cost(s, z, Stage::Full) == 0) return;
    for (Eigen::Index j = 0; j < m; ++j) {
      const int slot = slots[static_cast<std::size_t>(j)];
      const double h = 1e-7 * std::max(std::abs(z[slot]), 1.0);
      LatentVector zp = z;
      zp[slot] += h;
      hinge_residuals(s, act.index, zp, r_step);
      J.col(j) = (r_step - r) / h;
    }
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool accepted = false;
    for (int tries = 0; tries < 12 && !accepted; ++tries) {
      Eigen::MatrixXd A = JtJ;
      for (Eigen::Index j = 0; j < m; ++j) A(j, j) += lambda * std::max(JtJ(j, j), 1e-12);
      const Eigen::VectorXd delta = A.ldlt().solve(-g);
      LatentVector zt = z;
      for (Eigen::Index j = 0; j < m; ++j) zt[slots[static_cast<std::size_t>(j)]] += delta[j];
      if (!admissible(zt)) {
        lambda *= 4;
        continue;
      }
      hinge_residuals(s, act.index, zt, r_try);
      const double c = r_try.squaredNorm();
      if (c < cost) {
        z = zt;
        r = r_try;
        cost = c;
        lambda = std::max(lambda / 3, 1e-9);
        accepted = true;
      } else {
        lambda *= 4;
      }
    }
    if (!accepted) return;
  }
}

}  // namespace

LatentVector encode(const Phase& phase) {
  const auto& mask = phase.mask;
  const auto& g = mask.geometry();
  require(phase.image.geometry() == g, ErrorCode::DimensionMismatch, "image/mask geometry differ");
  const std::size_t n_pool = mask.count(Label::Pool);
  const std::size_t n_myo = mask.count(Label::Myo);
  require(n_pool >= 2, ErrorCode::DegenerateMask, "pool needs at least two voxels");
  require(n_myo > 0, ErrorCode::DegenerateMask, "myocardium is empty");

  const auto r = phantom_tilt();
  const Frame frame(g);
  double m2[3] = {0, 0, 0};
  double rv_sum[2] = {0, 0};
  double blood_sum = 0, myo_sum = 0;
  std::size_t n_rv = 0;
  for (int k = 0; k < g.dims.nz; ++k)
    for (int j = 0; j < g.dims.ny; ++j)
      for (int i = 0; i < g.dims.nx; ++i) {
        const auto label = static_cast<Label>(mask.at(i, j, k));
        if (label == Label::Background) continue;
        const auto q = frame(i, j, k);
        const double v = phase.image.at(i, j, k);
        if (label == Label::Pool) {
          for (int a = 0; a < 3; ++a) m2[a] += q[a] * q[a];
          blood_sum += v;
        } else if (label == Label::RV) {
          rv_sum[0] += q[0];
          rv_sum[1] += q[1];
          blood_sum += v;
          ++n_rv;
        } else {
          myo_sum += v;
        }
      }

  // Solid ellipsoid: E[x^2] = a^2/5; voxel centers lose a cell's variance.
  double semi[3];
  for (int a = 0; a < 3; ++a) {
    double cell = 0;
    for (int i = 0; i < 3; ++i) cell += r[i][a] * r[i][a] * g.spacing[i] * g.spacing[i] / 12.0;
    semi[a] = std::sqrt(5.0 * (m2[a] / static_cast<double>(n_pool) + cell));
  }
  LatentVector z = LatentVector::make(semi[2], semi[0], semi[1], 0, 0, 0, 0, 0);

  const double vv = g.spacing.voxel_volume();
  const double myo_volume = static_cast<double>(n_myo) * vv;
  double lo = 0, hi = 4 * std::max({semi[0], semi[1], semi[2]});
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    LatentVector c = z;
    c[LatentVector::WallThickness] = mid;
    (phantom_myo_volume(c) < myo_volume ? lo : hi) = mid;
  }
  z[LatentVector::WallThickness] = 0.5 * (lo + hi);

  if (n_rv > 0) {
    const double t = z[LatentVector::WallThickness];
    const double hull = 2.0 / 3.0 * std::numbers::pi * (z[0] + t) * (z[1] + t) * (z[2] + t);
    z[LatentVector::RvScale] = std::sqrt(1.0 + static_cast<double>(n_rv) * vv / hull) - 1.0;
    z[LatentVector::RvAngle] = std::atan2(rv_sum[1], rv_sum[0]);
  }
  z[LatentVector::PoolIntensity] =
      std::clamp(blood_sum / static_cast<double>(n_pool + n_rv), 0.0, 1.0);
  z[LatentVector::MyoIntensity] = std::clamp(myo_sum / static_cast<double>(n_myo), 0.0, 1.0);

  const Samples samples = collect(mask);
  std::vector<int> slots{LatentVector::LongSemiAxis, LatentVector::ShortSemiAxisA,
                         LatentVector::ShortSemiAxisB, LatentVector::WallThickness};
  if (n_rv > 0) {
    slots.push_back(LatentVector::RvScale);
    slots.push_back(LatentVector::RvAngle);
  }
  // Local fits can stall on a few boundary voxels; restart from seeded
  // perturbations of the best fit so far.
  fit_exact(samples, z, slots);
  std::size_t best = stage_cost(samples, z, Stage::Full);
  Rng rng(0x9e3779b9ULL);
  for (int restart = 0; restart < 40 && best > 0; ++restart) {
    LatentVector trial = z;
    const double scale = 0.004 * (1 + restart / 10);
    for (int slot : slots) {
      const double mag = slot == LatentVector::RvAngle ? 1.0 : std::max(std::abs(z[slot]), 1.0);
      trial[slot] += scale * mag * (2.0 * rng.uniform() - 1.0);
    }
    if (!admissible(trial)) continue;
    fit_exact(samples, trial, slots);
    const auto cost = stage_cost(samples, trial, Stage::Full);
    if (cost < best) {
      best = cost;
      z = trial;
    }
  }
  if (best > 0) refine(samples, z, slots, Stage::Full);
  return z;
}

namespace {

LatentVector clamp_intensities(LatentVector z) {
  for (auto slot : {LatentVector::PoolIntensity, LatentVector::MyoIntensity}) {
    z[slot] = std::clamp(z[slot], 0.0, 1.0);
  }
  return z;
}

}  // namespace

LatentVector lerp(const LatentVector& z0, const LatentVector& z1, double omega) {
  LatentVector out;
  for (std::size_t i = 0; i < LatentVector::kSize; ++i) {
    out[i] = (1.0 - omega) * z0[i] + omega * z1[i];
  }
  return clamp_intensities(out);
}

LatentVector slerp(const LatentVector& z0, const LatentVector& z1, double omega) {
  double n0 = 0, n1 = 0, dot = 0;
  for (std::size_t i = 0; i < LatentVector::kSize; ++i) {
    n0 += z0[i] * z0[i];
    n1 += z1[i] * z1[i];
    dot += z0[i] * z1[i];
  }
  require(n0 > 0 && n1 > 0, ErrorCode::ZeroVector, "slerp endpoint is the zero vector");
  if (omega == 0.0) return clamp_intensities(z0);
  if (omega == 1.0) return clamp_intensities(z1);
  const double cosine = std::clamp(dot / std::sqrt(n0 * n1), -1.0, 1.0);
  const double theta = std::acos(cosine);
  if (theta < 1e-6) return lerp(z0, z1, omega);
  const double s = std::sin(theta);
  const double w0 = std::sin((1.0 - omega) * theta) / s;
  const double w1 = std::sin(omega * theta) / s;
  LatentVector out;
  for (std::size_t i = 0; i < LatentVector::kSize; ++i) out[i] = w0 * z0[i] + w1 * z1[i];
  return clamp_intensities(out);
}

Geometry default_phantom_grid() { return Geometry{{64, 64, 64}, {2.5, 2.5, 2.5}}; }

namespace {

double jitter(Rng& rng, double value, double rel) { return value * (1.0 + rel * (2.0 * rng.uniform() - 1.0)); }

}  // namespace

LatentVector phantom_ed_latent(Pathology pathology, double u, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "anatomy"));
  double L = jitter(rng, 38.0, 0.08);
  // Sphericity is drawn directly so healthy values spread evenly.
  double b = L * rng.uniform(0.36, 0.62);
  double a = b * rng.uniform(1.0, 1.12);
  double t = jitter(rng, 9.0, 0.06);
  double s = jitter(rng, 0.45, 0.08);
  const double phi = kDefaultRvAngle + 0.15 * (2.0 * rng.uniform() - 1.0);
  const double pool_i = 0.82 + 0.05 * (2.0 * rng.uniform() - 1.0);
  const double myo_i = 0.35 + 0.05 * (2.0 * rng.uniform() - 1.0);
  u = std::clamp(u, 0.0, 1.0);
  switch (pathology) {
    case Pathology::DCM:
      L *= 1.0 + 0.10 * u;
      a += u * (0.88 * L - a);
      b += u * (0.85 * L - b);
      break;
    case Pathology::HCM:
      t += 9.0 * u;
      break;
    case Pathology::MINF:
      a *= 1.0 + 0.08 * u;
      b *= 1.0 + 0.08 * u;
      break;
    case Pathology::ARV:
      s += 0.65 * u;
      break;
    default:
      break;
  }
  return LatentVector::make(L, a, b, t, s, phi, pool_i, myo_i);
}

double phantom_ejection_fraction(Pathology pathology, double u, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "ejection"));
  const double noise = 2.0 * rng.uniform() - 1.0;
  if (pathology == Pathology::MINF) return 0.5 - 0.3 * std::clamp(u, 0.0, 1.0) + 0.02 * noise;
  return 0.6 + 0.08 * noise;
}

LatentVector phantom_es_latent(const LatentVector& ed, double ejection_fraction) {
  require(ejection_fraction >= 0 && ejection_fraction < 1, ErrorCode::InvalidArgument,
          "ejection fraction must lie in [0,1)");
  const double f = std::cbrt(1.0 - ejection_fraction);
  LatentVector es = ed;
  es[0] *= f;
  es[1] *= f;
  es[2] *= f;
  const double target = phantom_myo_volume(ed);
  double lo = 0, hi = 4 * std::max({ed[0], ed[1], ed[2]}) + ed[3];
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    es[LatentVector::WallThickness] = mid;
    (phantom_myo_volume(es) < target ? lo : hi) = mid;
  }
  es[LatentVector::WallThickness] = 0.5 * (lo + hi);
  es[LatentVector::RvScale] = 0.8 * ed[LatentVector::RvScale];
  return es;
}

PhantomSubject make_phantom_subject(const std::string& id, Pathology pathology, double u,
                                    const Geometry& grid, std::uint64_t seed) {
  PhantomSubject p;
  p.severity = pathology == Pathology::Healthy ? 0.0 : u;
  p.ed = phantom_ed_latent(pathology, p.severity, seed);
  p.es = phantom_es_latent(p.ed, phantom_ejection_fraction(pathology, p.severity, seed));
  p.subject.id = id;
  p.subject.pathology = pathology;
  p.subject.ed = decode(p.ed, grid, derive_seed(seed, "texture-ed"));
  p.subject.es = decode(p.es, grid, derive_seed(seed, "texture-es"));
  return p;
}

std::vector<PhantomSubject> generate_population(const PopulationSpec& spec) {
  require(spec.healthy >= 0 && spec.per_pathology >= 0, ErrorCode::InvalidArgument,
          "population counts must be >= 0");
  std::vector<PhantomSubject> out;
  for (int i = 0; i < spec.healthy; ++i) {
    const auto id = fmt::format("H{:03d}", i + 1);
    out.push_back(make_phantom_subject(id, Pathology::Healthy, 0.0, spec.grid,
                                       derive_seed(spec.seed, id)));
  }
  for (Pathology p : spec.pathologies) {
    Rng rng(derive_seed(spec.seed, fmt::format("severity-{}", to_string(p))));
    for (int i = 0; i < spec.per_pathology; ++i) {
      // Near-even severities: strata midpoints with a small seeded shift.
      const double u = (i + 0.5 + 0.3 * (rng.uniform() - 0.5)) / spec.per_pathology;
      const auto id = fmt::format("{}{:03d}", to_string(p), i + 1);
      out.push_back(make_phantom_subject(id, p, u, spec.grid, derive_seed(spec.seed, id)));
    }
  }
  return out;
}

}  // namespace pathco
