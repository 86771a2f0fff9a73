#include "pathco/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "pathco/error.hpp"

namespace pathco {

void validate_geometry(const Geometry& geometry) {
  const auto& d = geometry.dims;
  const auto& s = geometry.spacing;
  require(d.nx > 0 && d.ny > 0 && d.nz > 0, ErrorCode::InvalidArgument,
          fmt::format("dims must be positive, got {}x{}x{}", d.nx, d.ny, d.nz));
  require(s.sx > 0 && s.sy > 0 && s.sz > 0 && std::isfinite(s.sx) && std::isfinite(s.sy) &&
              std::isfinite(s.sz),
          ErrorCode::InvalidArgument,
          fmt::format("spacing must be positive, got {}x{}x{}", s.sx, s.sy, s.sz));
}

std::string describe(const Geometry& g) {
  return fmt::format("{}x{}x{} @ {}x{}x{} mm", g.dims.nx, g.dims.ny, g.dims.nz, g.spacing.sx,
                     g.spacing.sy, g.spacing.sz);
}

void require_same_geometry(const Geometry& a, const Geometry& b, std::string_view context) {
  if (!(a == b)) {
    fail(ErrorCode::GeometryMismatch,
         fmt::format("{}: {} vs {}", context, describe(a), describe(b)));
  }
}

std::string_view to_string(Label label) {
  switch (label) {
    case Label::Background: return "background";
    case Label::RV: return "RV";
    case Label::Myo: return "Myo";
    case Label::Pool: return "Pool";
  }
  return "?";
}

VoxelGrid::VoxelGrid(Geometry geometry, std::vector<float> values)
    : geometry_(geometry), values_(std::move(values)) {
  validate_geometry(geometry_);
  require(values_.size() == geometry_.voxel_count(), ErrorCode::DimensionMismatch,
          fmt::format("image has {} values for {}", values_.size(), describe(geometry_)));
  for (float v : values_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      fail(ErrorCode::InvalidArgument, fmt::format("image value {} outside [0,1]", v));
    }
  }
}

VoxelGrid VoxelGrid::filled(const Geometry& geometry, float value) {
  return VoxelGrid(geometry, std::vector<float>(geometry.voxel_count(), value));
}

LabelMask::LabelMask(Geometry geometry, std::vector<std::uint8_t> labels)
    : geometry_(geometry), labels_(std::move(labels)) {
  validate_geometry(geometry_);
  require(labels_.size() == geometry_.voxel_count(), ErrorCode::DimensionMismatch,
          fmt::format("mask has {} labels for {}", labels_.size(), describe(geometry_)));
  for (auto l : labels_) {
    if (l >= kNumClasses) fail(ErrorCode::InvalidArgument, fmt::format("label {} not in 0..3", l));
  }
}

LabelMask LabelMask::empty(const Geometry& geometry) {
  return LabelMask(geometry, std::vector<std::uint8_t>(geometry.voxel_count(), 0));
}

std::size_t LabelMask::count(Label label) const {
  const auto target = static_cast<std::uint8_t>(label);
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), target));
}

ProbabilityMap::ProbabilityMap(Geometry geometry, std::vector<float> probs)
    : geometry_(geometry), probs_(std::move(probs)) {
  validate_geometry(geometry_);
  const std::size_t n = geometry_.voxel_count();
  require(probs_.size() == kNumClasses * n, ErrorCode::DimensionMismatch,
          fmt::format("probability map has {} values, expected {}", probs_.size(),
                      kNumClasses * n));
  for (std::size_t v = 0; v < n; ++v) {
    double sum = 0.0;
    for (int c = 0; c < kNumClasses; ++c) {
      const float p = probs_[c * n + v];
      if (!(p >= 0.0f && p <= 1.0f)) {
        fail(ErrorCode::InvalidArgument, fmt::format("probability {} outside [0,1]", p));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
      fail(ErrorCode::InvalidArgument,
           fmt::format("probabilities at voxel {} sum to {}", v, sum));
    }
  }
}

std::string_view to_string(Pathology pathology) {
  switch (pathology) {
    case Pathology::Healthy: return "Healthy";
    case Pathology::DCM: return "DCM";
    case Pathology::HCM: return "HCM";
    case Pathology::MINF: return "MINF";
    case Pathology::ARV: return "ARV";
    case Pathology::Other: return "Other";
  }
  return "Other";
}

Pathology parse_pathology(std::string_view name) {
  for (auto p : {Pathology::Healthy, Pathology::DCM, Pathology::HCM, Pathology::MINF,
                 Pathology::ARV, Pathology::Other}) {
    if (to_string(p) == name) return p;
  }
  if (name == "NOR") return Pathology::Healthy;
  if (name == "RV") return Pathology::ARV;
  fail(ErrorCode::InvalidArgument, fmt::format("unknown pathology '{}'", name));
}

void Subject::validate() const {
  const auto& g = ed.image.geometry();
  for (const Geometry* other : {&ed.mask.geometry(), &es.image.geometry(), &es.mask.geometry()}) {
    if (!(*other == g)) {
      fail(ErrorCode::DimensionMismatch,
           fmt::format("subject {}: phases disagree ({} vs {})", id, describe(g),
                       describe(*other)));
    }
  }
}

double volume_of(const LabelMask& mask, Label label) {
  return static_cast<double>(mask.count(label)) * mask.spacing().voxel_volume();
}

AxisLengths principal_axis_lengths(const LabelMask& mask, Label label) {
  const auto& g = mask.geometry();
  const auto target = static_cast<std::uint8_t>(label);
  std::vector<Eigen::Vector3d> points;
  for (int z = 0; z < g.dims.nz; ++z) {
    for (int y = 0; y < g.dims.ny; ++y) {
      for (int x = 0; x < g.dims.nx; ++x) {
        if (mask.at(x, y, z) == target) {
          points.emplace_back(x * g.spacing.sx, y * g.spacing.sy, z * g.spacing.sz);
        }
      }
    }
  }
  require(points.size() >= 2, ErrorCode::FewerThanTwoVoxels,
          fmt::format("label {} has {} voxel(s)", to_string(label), points.size()));

  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector3d d = p - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());

  // Eigenvalues come back in ascending order.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  const Eigen::Vector3d first = solver.eigenvectors().col(2);
  const Eigen::Vector3d last = solver.eigenvectors().col(0);

  auto extent = [&](const Eigen::Vector3d& axis) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : points) {
      const double t = (p - centroid).dot(axis);
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    return hi - lo;
  };
  return {extent(first), extent(last)};
}

LabelMask argmax_labels(const ProbabilityMap& pm) {
  const std::size_t n = pm.voxel_count();
  std::vector<std::uint8_t> labels(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    int best = 0;
    float best_p = pm.prob(0, v);
    for (int c = 1; c < kNumClasses; ++c) {
      const float p = pm.prob(c, v);
      if (p > best_p) {
        best = c;
        best_p = p;
      }
    }
    labels[v] = static_cast<std::uint8_t>(best);
  }
  return LabelMask(pm.geometry(), std::move(labels));
}

ProbabilityMap one_hot(const LabelMask& mask) {
  const std::size_t n = mask.size();
  std::vector<float> probs(kNumClasses * n, 0.0f);
  for (std::size_t v = 0; v < n; ++v) probs[mask[v] * n + v] = 1.0f;
  return ProbabilityMap(mask.geometry(), std::move(probs));
}

}  // namespace pathco
