#include "pathco/severity.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pathco/error.hpp"

namespace pathco {

SeverityScore::SeverityScore(double gamma) : gamma_(gamma) {
  require(gamma >= 0.0 && gamma <= 1.0, ErrorCode::InvalidArgument,
          fmt::format("severity {} outside [0,1]", gamma));
}

std::string_view to_string(Direction direction) {
  return direction == Direction::Increasing ? "increasing" : "decreasing";
}

Direction parse_direction(std::string_view name) {
  if (name == "increasing") return Direction::Increasing;
  if (name == "decreasing") return Direction::Decreasing;
  fail(ErrorCode::InvalidArgument, fmt::format("unknown direction '{}'", name));
}

Direction severity_direction(Pathology pathology) {
  return pathology == Pathology::MINF ? Direction::Decreasing : Direction::Increasing;
}

void NormalizationStats::validate() const {
  require(!table.empty(), ErrorCode::InvalidArgument, "empty percentile table");
  for (std::size_t i = 1; i < table.size(); ++i) {
    require(table[i].rank > table[i - 1].rank, ErrorCode::InvalidArgument,
            "percentile ranks must be strictly increasing");
    require(table[i].value >= table[i - 1].value, ErrorCode::InvalidArgument,
            "percentile values must be nondecreasing");
  }
}

double f_dcm(const Subject& subject) {
  try {
    const auto axes = principal_axis_lengths(subject.ed.mask, Label::Pool);
    require(axes.long_mm > 0.0, ErrorCode::DegenerateMask, "pool has zero long-axis extent");
    return axes.short_mm / axes.long_mm;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::FewerThanTwoVoxels) {
      fail(ErrorCode::DegenerateMask, fmt::format("subject {}: {}", subject.id, e.what()));
    }
    throw;
  }
}

double f_hcm(const Subject& subject) { return volume_of(subject.ed.mask, Label::Myo); }

double f_minf(const Subject& subject) {
  const double ved = volume_of(subject.ed.mask, Label::Pool);
  const double ves = volume_of(subject.es.mask, Label::Pool);
  require(ved > 0.0, ErrorCode::ZeroEDVolume, fmt::format("subject {}", subject.id));
  return (ved - ves) / ved;
}

double f_arv(const Subject& subject) { return volume_of(subject.ed.mask, Label::RV); }

double biomarker(const Subject& subject, Pathology pathology) {
  switch (pathology) {
    case Pathology::DCM: return f_dcm(subject);
    case Pathology::HCM: return f_hcm(subject);
    case Pathology::MINF: return f_minf(subject);
    case Pathology::ARV: return f_arv(subject);
    default: break;
  }
  fail(ErrorCode::InvalidArgument,
       fmt::format("no severity function for {}", to_string(pathology)));
}

double percentile_of_sorted(std::span<const double> sorted, double k) {
  require(!sorted.empty(), ErrorCode::EmptyInput, "percentile of empty set");
  const double r = k / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(r));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double w = r - static_cast<double>(lo);
  return w == 0.0 ? sorted[lo] : sorted[lo] + (sorted[hi] - sorted[lo]) * w;
}

NormalizationStats fit_normalization(std::span<const double> biomarkers, Pathology pathology) {
  require(biomarkers.size() >= 2, ErrorCode::EmptyInput,
          fmt::format("need at least 2 biomarker values, got {}", biomarkers.size()));
  std::vector<double> sorted(biomarkers.begin(), biomarkers.end());
  for (double v : sorted) {
    require(std::isfinite(v), ErrorCode::InvalidArgument, "non-finite biomarker");
  }
  std::sort(sorted.begin(), sorted.end());
  NormalizationStats stats;
  stats.pathology = pathology;
  stats.direction = severity_direction(pathology);
  stats.table.reserve(101);
  for (int k = 0; k <= 100; ++k) {
    stats.table.push_back({static_cast<double>(k), percentile_of_sorted(sorted, k)});
  }
  // Interpolation can round a hair below its left neighbour.
  for (std::size_t i = 1; i < stats.table.size(); ++i) {
    stats.table[i].value = std::max(stats.table[i].value, stats.table[i - 1].value);
  }
  return stats;
}

SeverityScore normalize_to_gamma(double value, const NormalizationStats& stats,
                                 Direction direction) {
  const auto& t = stats.table;
  require(!t.empty(), ErrorCode::InvalidArgument, "empty percentile table");
  double rank;
  if (value < t.front().value) {
    rank = t.front().rank;
  } else if (value > t.back().value) {
    rank = t.back().rank;
  } else {
    // First entry >= value, last entry <= value.
    const auto lo_it = std::lower_bound(t.begin(), t.end(), value,
                                        [](const PercentilePoint& p, double v) { return p.value < v; });
    const auto hi_it = std::upper_bound(t.begin(), t.end(), value,
                                        [](double v, const PercentilePoint& p) { return v < p.value; });
    if (lo_it != t.end() && lo_it->value == value) {
      const auto last = std::prev(hi_it);
      rank = 0.5 * (lo_it->rank + last->rank);
    } else {
      const auto& right = *lo_it;
      const auto& left = *std::prev(lo_it);
      const double w = (value - left.value) / (right.value - left.value);
      rank = left.rank + w * (right.rank - left.rank);
    }
  }
  // Table ends below 0 or above 100 are clamped onto the unit interval.
  double gamma = std::clamp(rank / 100.0, 0.0, 1.0);
  if (value < t.front().value) gamma = 0.0;
  if (value > t.back().value) gamma = 1.0;
  if (direction == Direction::Decreasing) gamma = 1.0 - gamma;
  return SeverityScore(gamma);
}

SeverityScore normalize_to_gamma(double value, const NormalizationStats& stats) {
  return normalize_to_gamma(value, stats, stats.direction);
}

double biomarker_at_gamma(const NormalizationStats& stats, double gamma) {
  const auto& t = stats.table;
  require(!t.empty(), ErrorCode::InvalidArgument, "empty percentile table");
  gamma = std::clamp(gamma, 0.0, 1.0);
  const double rank = 100.0 * (stats.direction == Direction::Increasing ? gamma : 1.0 - gamma);
  if (rank <= t.front().rank) return t.front().value;
  if (rank >= t.back().rank) return t.back().value;
  const auto it = std::lower_bound(t.begin(), t.end(), rank,
                                   [](const PercentilePoint& p, double r) { return p.rank < r; });
  if (it->rank == rank) return it->value;
  const auto& left = *std::prev(it);
  const double w = (rank - left.rank) / (it->rank - left.rank);
  return left.value + w * (it->value - left.value);
}

double severity_gamma(const Subject& subject, const NormalizationStats& stats) {
  return normalize_to_gamma(biomarker(subject, stats.pathology), stats).gamma();
}

}  // namespace pathco
