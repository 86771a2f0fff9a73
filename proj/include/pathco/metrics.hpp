#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pathco/volume.hpp"

namespace pathco {

/// 2|A∩B| / (|A|+|B|) for one class; 1 when both are empty.
double dice3d(const LabelMask& a, const LabelMask& b, Label c);

/// Voxels of class c with at least one face neighbor that is not c
/// (outside the grid counts as not c).
std::vector<std::array<int, 3>> boundary_voxels(const LabelMask& mask, Label c);

/// 95th percentile (linear interpolation) of the pooled directed
/// boundary-to-boundary distances in mm. Throws EmptySurface.
double hd95(const LabelMask& a, const LabelMask& b, Label c);

/// Inverse relative volume of each foreground class in `target`, scaled so
/// the largest weight is 1. Classes absent from the target get 0; a target
/// without foreground gets equal weights.
std::array<double, 3> gdl_weights(const LabelMask& target);

/// 1 - sum_c w_c dice_c / sum_c w_c over RV, Myo, Pool.
double generalized_dice(const LabelMask& pred, const LabelMask& target);
double generalized_dice(const LabelMask& pred, const LabelMask& target,
                        const std::array<double, 3>& weights);

inline constexpr int kSsimWindow = 7;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean local SSIM over a 7^3 box window clipped at the grid border.
double ssim(const Geometry& geometry, std::span<const double> a, std::span<const double> b);
double ssim(const VoxelGrid& a, const VoxelGrid& b);
/// SSIM of the class-c indicator channels.
double ssim(const LabelMask& a, const LabelMask& b, Label c);

/// Pearson correlation. Throws ZeroVariance.
double ncc(std::span<const double> a, std::span<const double> b);
double ncc(const VoxelGrid& a, const VoxelGrid& b);
double ncc(const LabelMask& a, const LabelMask& b, Label c);

/// Displacement in mm per voxel.
struct DeformationField {
  Geometry geometry;
  std::vector<std::array<double, 3>> displacement;
};

/// Sum over components and axes of the mean squared forward difference.
/// Throws TooSmallGrid when an axis has fewer than two voxels.
double smoothness(const DeformationField& phi);

/// Mean |I_warp - I_tgt| plus mean |onehot(M_warp) - onehot(M_tgt)| over
/// the four class channels.
double correction_loss(const VoxelGrid& image_warp, const VoxelGrid& image_target,
                       const LabelMask& mask_warp, const LabelMask& mask_target);

/// Per-class mask loss weighted by gdl_weights(target): sum_c w_c times
/// ((1 - dice_c) + (1 - ssim_c) + (1 - ncc_c)) on class indicators.
double mask_loss(const LabelMask& pred, const LabelMask& target);

struct LossWeights {
  double align = 1.0;
  double fid = 1.0;
  double mask = 20.0;
  double corr = 20.0;
  double sm = 40.0;
  double img_ssim = 10.0;
  double lpips = 1.0;
};

struct LossComponents {
  double corr = 0.0;
  double sm = 0.0;
  double img_ssim = 0.0;  // 1 - SSIM of the images
  double lpips = 0.0;     // 0 unless a perceptual scorer is supplied
  double mask = 0.0;
};

struct CompositeLosses {
  double align = 0.0;
  double fid = 0.0;
  double mask = 0.0;
  double total = 0.0;
};

CompositeLosses composite_losses(const LossComponents& c, const LossWeights& w = {});

using PerceptualScorer = std::function<double(const VoxelGrid&, const VoxelGrid&)>;

/// All components for a generated/warped pair against its target.
LossComponents loss_components(const VoxelGrid& image_warp, const VoxelGrid& image_target,
                               const LabelMask& mask_warp, const LabelMask& mask_target,
                               const DeformationField& phi,
                               const PerceptualScorer& lpips = nullptr);

/// Per-class Dice and HD95 in Pool, Myo, RV order. HD95 is empty when a
/// surface is missing; the HD95 average covers the available classes.
struct MetricReport {
  std::string case_id;
  std::array<double, 3> dice{};
  std::array<std::optional<double>, 3> hd95{};
  double dice_avg = 0.0;
  std::optional<double> hd95_avg;
  std::optional<LossComponents> losses;
  std::optional<CompositeLosses> composites;
};

/// Column order of reports.
inline constexpr std::array<Label, 3> kReportLabels = {Label::Pool, Label::Myo, Label::RV};

MetricReport evaluate_masks(const LabelMask& pred, const LabelMask& truth, std::string case_id = {});

/// Class-wise mean over reports (HD95 means skip missing values).
MetricReport mean_report(const std::vector<MetricReport>& reports, std::string case_id = "mean");

/// Aligned text table: case, Dice Pool/Myo/RV/Avg, HD95 Pool/Myo/RV/Avg.
std::string format_table(const std::vector<MetricReport>& reports);

}  // namespace pathco
