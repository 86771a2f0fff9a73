#include "pathco/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pathco/error.hpp"

namespace pathco {
namespace {

struct Box {
  int x0, x1, y0, y1;
};

double sample_linear(const VoxelGrid& img, double fx, double fy, double fz) {
  const auto& d = img.dims();
  auto split = [](double f, int n, int& i0, int& i1, double& w) {
    f = std::clamp(f, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<int>(std::floor(f));
    i1 = std::min(i0 + 1, n - 1);
    w = f - i0;
  };
  int x0, x1, y0, y1, z0, z1;
  double wx, wy, wz;
  split(fx, d.nx, x0, x1, wx);
  split(fy, d.ny, y0, y1, wy);
  split(fz, d.nz, z0, z1, wz);
  auto lerp = [](double a, double b, double w) { return w == 0.0 ? a : a + (b - a) * w; };
  auto plane = [&](int z) {
    const double a = lerp(img.at(x0, y0, z), img.at(x1, y0, z), wx);
    const double b = lerp(img.at(x0, y1, z), img.at(x1, y1, z), wx);
    return lerp(a, b, wy);
  };
  return lerp(plane(z0), plane(z1), wz);
}

int nearest(double f, int n) {
  return std::clamp(static_cast<int>(std::floor(f + 0.5)), 0, n - 1);
}

// Resamples an image/mask pair onto `out` using per-axis index maps
// (offset + i*step in input index space).
Phase resample(const Phase& in, const Geometry& out, const std::array<double, 3>& offset,
               const std::array<double, 3>& step) {
  const auto n = out.voxel_count();
  std::vector<float> values(n);
  std::vector<std::uint8_t> labels(n);
  const auto& din = in.image.dims();
  for (int z = 0; z < out.dims.nz; ++z) {
    const double fz = offset[2] + z * step[2];
    for (int y = 0; y < out.dims.ny; ++y) {
      const double fy = offset[1] + y * step[1];
      for (int x = 0; x < out.dims.nx; ++x) {
        const double fx = offset[0] + x * step[0];
        const auto idx = out.index(x, y, z);
        values[idx] = static_cast<float>(std::clamp(sample_linear(in.image, fx, fy, fz), 0.0, 1.0));
        labels[idx] = in.mask.at(nearest(fx, din.nx), nearest(fy, din.ny), nearest(fz, din.nz));
      }
    }
  }
  return {VoxelGrid(out, std::move(values)), LabelMask(out, std::move(labels))};
}

Phase resample_inplane(const Phase& in, double target) {
  const auto& g = in.image.geometry();
  auto new_count = [&](int n, double s) {
    return static_cast<int>(std::floor((n - 1) * s / target + 1e-9)) + 1;
  };
  Geometry out{{new_count(g.dims.nx, g.spacing.sx), new_count(g.dims.ny, g.spacing.sy), g.dims.nz},
               {target, target, g.spacing.sz}};
  return resample(in, out, {0.0, 0.0, 0.0},
                  {target / g.spacing.sx, target / g.spacing.sy, 1.0});
}

Box foreground_box(const Subject& s) {
  const auto& g = s.ed.mask.geometry();
  Box box{g.dims.nx, -1, g.dims.ny, -1};
  for (const LabelMask* m : {&s.ed.mask, &s.es.mask}) {
    for (int z = 0; z < g.dims.nz; ++z) {
      for (int y = 0; y < g.dims.ny; ++y) {
        for (int x = 0; x < g.dims.nx; ++x) {
          if (m->at(x, y, z) == 0) continue;
          box.x0 = std::min(box.x0, x);
          box.x1 = std::max(box.x1, x);
          box.y0 = std::min(box.y0, y);
          box.y1 = std::max(box.y1, y);
        }
      }
    }
  }
  require(box.x1 >= 0, ErrorCode::EmptyMask, fmt::format("subject {} has no foreground", s.id));
  return box;
}

Phase crop_and_resize(const Phase& in, const Box& box, const Dims& out_dims) {
  const auto& g = in.image.geometry();
  const int nin[3] = {box.x1 - box.x0 + 1, box.y1 - box.y0 + 1, g.dims.nz};
  const int nout[3] = {out_dims.nx, out_dims.ny, out_dims.nz};
  std::array<double, 3> offset{static_cast<double>(box.x0), static_cast<double>(box.y0), 0.0};
  std::array<double, 3> step{};
  double spacing[3];
  for (int a = 0; a < 3; ++a) {
    if (nout[a] == 1) {
      offset[a] += (nin[a] - 1) / 2.0;
      step[a] = 0.0;
      spacing[a] = g.spacing[a] * nin[a];
    } else {
      step[a] = static_cast<double>(nin[a] - 1) / (nout[a] - 1);
      spacing[a] = g.spacing[a] * step[a];
      if (spacing[a] <= 0.0) spacing[a] = g.spacing[a];
    }
  }
  Geometry out{out_dims, {spacing[0], spacing[1], spacing[2]}};
  return resample(in, out, offset, step);
}

VoxelGrid normalize(const VoxelGrid& img) {
  const auto values = img.values();
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const float mn = *lo;
  const float mx = *hi;
  std::vector<float> out(values.size(), 0.0f);
  if (mx > mn) {
    const double range = static_cast<double>(mx) - mn;
    for (std::size_t i = 0; i < values.size(); ++i) {
      out[i] = static_cast<float>(std::clamp((values[i] - static_cast<double>(mn)) / range, 0.0, 1.0));
    }
  }
  return VoxelGrid(img.geometry(), std::move(out));
}

}  // namespace

Subject preprocess(const Subject& subject, const PreprocessSpec& spec) {
  subject.validate();
  require(spec.inplane_spacing_mm > 0.0, ErrorCode::InvalidArgument, "in-plane spacing must be > 0");
  require(spec.margin >= 0.0, ErrorCode::InvalidArgument, "margin must be >= 0");
  require(spec.output_dims.nx > 0 && spec.output_dims.ny > 0 && spec.output_dims.nz > 0,
          ErrorCode::InvalidArgument, "output dims must be positive");

  Subject out = subject;
  out.ed = resample_inplane(subject.ed, spec.inplane_spacing_mm);
  out.es = resample_inplane(subject.es, spec.inplane_spacing_mm);

  Box box = foreground_box(out);
  const auto& d = out.ed.mask.dims();
  const int mx = static_cast<int>(std::ceil(spec.margin * (box.x1 - box.x0 + 1) - 1e-9));
  const int my = static_cast<int>(std::ceil(spec.margin * (box.y1 - box.y0 + 1) - 1e-9));
  box = {std::max(0, box.x0 - mx), std::min(d.nx - 1, box.x1 + mx), std::max(0, box.y0 - my),
         std::min(d.ny - 1, box.y1 + my)};

  out.ed = crop_and_resize(out.ed, box, spec.output_dims);
  out.es = crop_and_resize(out.es, box, spec.output_dims);
  out.ed.image = normalize(out.ed.image);
  out.es.image = normalize(out.es.image);
  return out;
}

}  // namespace pathco
