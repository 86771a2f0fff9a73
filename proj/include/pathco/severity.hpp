#pragma once

#include <span>
#include <vector>

#include "pathco/volume.hpp"

namespace pathco {

/// Normalized disease severity in [0, 1].
class SeverityScore {
 public:
  explicit SeverityScore(double gamma);
  double gamma() const { return gamma_; }

 private:
  double gamma_;
};

enum class Direction { Increasing, Decreasing };

std::string_view to_string(Direction direction);
Direction parse_direction(std::string_view name);

/// Sign convention of severity per pathology: EF falls as MINF worsens,
/// every other biomarker rises.
Direction severity_direction(Pathology pathology);

struct PercentilePoint {
  double rank = 0.0;  // percentile rank in [0, 100]
  double value = 0.0;
};

struct NormalizationStats {
  Pathology pathology = Pathology::Other;
  Direction direction = Direction::Increasing;
  /// Ranks strictly increasing, values nondecreasing.
  std::vector<PercentilePoint> table;

  /// Throws InvalidArgument if the table ordering invariants are broken.
  void validate() const;
};

/// LV sphericity at ED: L_short / L_long of the pool. Throws DegenerateMask.
double f_dcm(const Subject& subject);
/// Myocardial volume at ED, mm^3.
double f_hcm(const Subject& subject);
/// LV ejection fraction from ED/ES pool volumes. Throws ZeroEDVolume.
double f_minf(const Subject& subject);
/// RV cavity volume at ED, mm^3.
double f_arv(const Subject& subject);

/// Dispatches to the biomarker for a disease pathology.
double biomarker(const Subject& subject, Pathology pathology);

/// Percentile of sorted values with linear interpolation between order
/// statistics at rank r = k/100 * (n - 1).
double percentile_of_sorted(std::span<const double> sorted, double k);

/// Percentile table at every integer rank 0..100. Throws EmptyInput for
/// fewer than two values.
NormalizationStats fit_normalization(std::span<const double> biomarkers, Pathology pathology);

/// Piecewise-linear value -> rank/100, clamped to [0, 1]; decreasing
/// direction flips to 1 - rank/100. Values on a flat stretch of the table
/// map to the middle of that stretch.
SeverityScore normalize_to_gamma(double biomarker, const NormalizationStats& stats,
                                 Direction direction);
SeverityScore normalize_to_gamma(double biomarker, const NormalizationStats& stats);

/// Biomarker value whose normalized severity is `gamma` (the table value at
/// the matching rank).
double biomarker_at_gamma(const NormalizationStats& stats, double gamma);

/// f_d followed by normalize_to_gamma with the stats' direction.
double severity_gamma(const Subject& subject, const NormalizationStats& stats);

}  // namespace pathco
