#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pathco/volume.hpp"

namespace pathco {

/// Parameters of the cardiac phantom. Lengths in mm, angle in radians,
/// intensities in [0, 1]. The LV sits at phantom_center() in a fixed tilted
/// frame whose z axis is the long axis.
struct LatentVector {
  enum Slot {
    LongSemiAxis = 0,   // L, along the LV frame z axis
    ShortSemiAxisA,     // a, along the LV frame x axis
    ShortSemiAxisB,     // b, along the LV frame y axis
    WallThickness,      // t >= 0
    RvScale,            // s >= 0, RV outer radii = (1 + s) * epicardial radii
    RvAngle,            // phi, direction of the RV side in the LV x-y plane
    PoolIntensity,
    MyoIntensity,
  };
  static constexpr std::size_t kSize = 8;

  std::array<double, kSize> params{};

  double& operator[](std::size_t i) { return params[i]; }
  double operator[](std::size_t i) const { return params[i]; }
  bool operator==(const LatentVector&) const = default;

  /// Throws InvalidArgument on nonpositive semi-axes, negative thickness or
  /// RV scale, non-finite values or intensities outside [0, 1].
  void validate() const;

  static LatentVector make(double L, double a, double b, double t, double s, double phi,
                           double pool_intensity, double myo_intensity);
};

inline constexpr double kBackgroundIntensity = 0.08;
inline constexpr double kTextureAmplitude = 0.02;
inline constexpr double kDefaultRvAngle = 2.6;

/// Rotation from the LV frame to grid axes (columns are LV axes).
std::array<std::array<double, 3>, 3> phantom_tilt();

/// LV center: the grid center moved 7% of the extent away from the default
/// RV side, plus a sub-voxel offset.
std::array<double, 3> phantom_center(const Geometry& grid);

/// Analytic volumes, mm^3.
double phantom_pool_volume(const LatentVector& z);
double phantom_myo_volume(const LatentVector& z);
double phantom_rv_volume(const LatentVector& z);

/// Rasterizes the phantom. Pool is the (a, b, L) ellipsoid, Myo the shell out
/// to (a+t, b+t, L+t), RV the half of the (1+s)-scaled epicardial ellipsoid
/// (long axis unscaled) facing phi, outside the epicardium. Image: blood and
/// RV at the pool intensity, Myo at its own, background 0.08, plus a seeded
/// +-0.02 texture. Throws PhantomExceedsGrid when a labeled voxel touches
/// the grid border.
Phase decode(const LatentVector& z, const Geometry& grid, std::uint64_t texture_seed = 0);

/// Moment-based fit refined to minimize voxel label mismatch against the
/// input mask. Throws DegenerateMask when Pool has < 2 voxels or Myo is empty.
LatentVector encode(const Phase& phase);

/// Labels decode(z) disagrees with `mask` on.
std::size_t phantom_mismatch(const LatentVector& z, const LabelMask& mask);

/// Spherical linear interpolation with linear fallback below 1e-6 rad;
/// intensities are clamped into [0, 1] afterwards. Throws ZeroVector.
LatentVector slerp(const LatentVector& z0, const LatentVector& z1, double omega);
LatentVector lerp(const LatentVector& z0, const LatentVector& z1, double omega);

/// 64^3 grid at 2.5 mm.
Geometry default_phantom_grid();

/// A phantom subject with its generating latents.
struct PhantomSubject {
  Subject subject;
  LatentVector ed;
  LatentVector es;
  double severity = 0.0;  // generator severity u in [0, 1]; 0 for healthy
};

struct PopulationSpec {
  Geometry grid = default_phantom_grid();
  int healthy = 20;
  int per_pathology = 20;
  std::vector<Pathology> pathologies{Pathology::DCM, Pathology::HCM, Pathology::MINF,
                                     Pathology::ARV};
  std::uint64_t seed = 0;
};

/// ED latent of a subject: healthy variation plus the pathology's effect at
/// severity u.
LatentVector phantom_ed_latent(Pathology pathology, double u, std::uint64_t seed);
/// ES latent: pool scaled to the subject's ejection fraction with Myo volume
/// conserved and the RV contracted.
LatentVector phantom_es_latent(const LatentVector& ed, double ejection_fraction);
double phantom_ejection_fraction(Pathology pathology, double u, std::uint64_t seed);

PhantomSubject make_phantom_subject(const std::string& id, Pathology pathology, double u,
                                    const Geometry& grid, std::uint64_t seed);

/// Healthy subjects "H001".., then per pathology "DCM001".. with severities
/// spread over [0, 1].
std::vector<PhantomSubject> generate_population(const PopulationSpec& spec);

}  // namespace pathco
