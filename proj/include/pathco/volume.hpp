#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pathco {

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  int operator[](int axis) const { return axis == 0 ? nx : axis == 1 ? ny : nz; }
  bool operator==(const Dims&) const = default;
};

struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  double voxel_volume() const { return sx * sy * sz; }
  double operator[](int axis) const { return axis == 0 ? sx : axis == 1 ? sy : sz; }
  bool operator==(const Spacing&) const = default;
};

/// Voxel lattice shared by images, masks and probability maps.
/// Voxel coordinates are cell centers; the physical position of index
/// (x, y, z) is (x*sx, y*sy, z*sz) in mm. Storage is x-fastest.
struct Geometry {
  Dims dims;
  Spacing spacing;

  std::size_t voxel_count() const { return dims.count(); }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims.nx) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims.ny) * z);
  }
  std::array<double, 3> position(int x, int y, int z) const {
    return {x * spacing.sx, y * spacing.sy, z * spacing.sz};
  }
  /// Physical coordinates of the grid center.
  std::array<double, 3> center() const {
    return {(dims.nx - 1) * spacing.sx / 2.0, (dims.ny - 1) * spacing.sy / 2.0,
            (dims.nz - 1) * spacing.sz / 2.0};
  }
  bool operator==(const Geometry&) const = default;
};

/// Throws InvalidArgument unless dims and spacing are strictly positive.
void validate_geometry(const Geometry& geometry);

std::string describe(const Geometry& geometry);

enum class Label : std::uint8_t { Background = 0, RV = 1, Myo = 2, Pool = 3 };

inline constexpr int kNumClasses = 4;
inline constexpr std::array<Label, 3> kForegroundLabels = {Label::RV, Label::Myo, Label::Pool};

std::string_view to_string(Label label);

/// Scalar image with values in [0, 1].
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(Geometry geometry, std::vector<float> values);

  static VoxelGrid filled(const Geometry& geometry, float value);

  const Geometry& geometry() const { return geometry_; }
  const Dims& dims() const { return geometry_.dims; }
  const Spacing& spacing() const { return geometry_.spacing; }
  std::size_t size() const { return values_.size(); }
  std::span<const float> values() const { return values_; }
  float at(int x, int y, int z) const { return values_[geometry_.index(x, y, z)]; }
  float operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const VoxelGrid&) const = default;

 private:
  Geometry geometry_;
  std::vector<float> values_;
};

class LabelMask {
 public:
  LabelMask() = default;
  LabelMask(Geometry geometry, std::vector<std::uint8_t> labels);

  static LabelMask empty(const Geometry& geometry);

  const Geometry& geometry() const { return geometry_; }
  const Dims& dims() const { return geometry_.dims; }
  const Spacing& spacing() const { return geometry_.spacing; }
  std::size_t size() const { return labels_.size(); }
  std::span<const std::uint8_t> labels() const { return labels_; }
  std::uint8_t at(int x, int y, int z) const { return labels_[geometry_.index(x, y, z)]; }
  std::uint8_t operator[](std::size_t i) const { return labels_[i]; }

  std::size_t count(Label label) const;

  bool operator==(const LabelMask&) const = default;

 private:
  Geometry geometry_;
  std::vector<std::uint8_t> labels_;
};

/// Per-voxel class probabilities (background, RV, Myo, Pool), stored as
/// four planar channels: channel c occupies [c*n, (c+1)*n).
class ProbabilityMap {
 public:
  static constexpr double kSimplexTolerance = 1e-6;

  ProbabilityMap() = default;
  ProbabilityMap(Geometry geometry, std::vector<float> probs);

  const Geometry& geometry() const { return geometry_; }
  std::size_t voxel_count() const { return geometry_.voxel_count(); }
  std::span<const float> channel(int c) const {
    return std::span<const float>(probs_).subspan(c * voxel_count(), voxel_count());
  }
  std::span<const float> data() const { return probs_; }
  float prob(int c, std::size_t voxel) const { return probs_[c * voxel_count() + voxel]; }

  bool operator==(const ProbabilityMap&) const = default;

 private:
  Geometry geometry_;
  std::vector<float> probs_;
};

enum class Pathology { Healthy, DCM, HCM, MINF, ARV, Other };

std::string_view to_string(Pathology pathology);
/// Throws InvalidArgument for unknown names.
Pathology parse_pathology(std::string_view name);

struct Phase {
  VoxelGrid image;
  LabelMask mask;
};

/// A labeled subject with end-diastolic and end-systolic phases.
struct Subject {
  std::string id;
  Phase ed;
  Phase es;
  Pathology pathology = Pathology::Other;

  /// Throws DimensionMismatch if any image/mask pair disagrees on geometry.
  void validate() const;
};

/// count(label) * voxel volume, in mm^3.
double volume_of(const LabelMask& mask, Label label);

struct AxisLengths {
  double long_mm = 0.0;
  double short_mm = 0.0;
};

/// Extents of the label's voxel centers along the first and last principal
/// components (physical coordinates). Throws FewerThanTwoVoxels.
AxisLengths principal_axis_lengths(const LabelMask& mask, Label label);

/// Per-voxel argmax, ties to the lowest class index.
LabelMask argmax_labels(const ProbabilityMap& pm);

ProbabilityMap one_hot(const LabelMask& mask);

/// Throws GeometryMismatch with the given context when geometries differ.
void require_same_geometry(const Geometry& a, const Geometry& b, std::string_view context);

}  // namespace pathco
