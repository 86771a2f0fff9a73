#pragma once

#include <string>
#include <vector>

#include "pathco/anchors.hpp"
#include "pathco/trajectory.hpp"

namespace pathco {

/// Severity-ordered element of the cohort a plan is built over.
struct CohortEntry {
  std::string id;
  double gamma = 0.0;
};

/// Train/validation split for one lattice cell.
struct SIVPlan {
  double delta_gamma = 0.0;
  int alpha = 1;
  int stride = 1;
  int a_max = 0;
  /// Subsampled sequence, index k = position.
  std::vector<CohortEntry> sequence;
  std::vector<std::string> train_ids;  // sequence training ids, then anchor ids
  std::vector<std::string> val_ids;
};

/// Spacing of the base cohort grid in gamma units.
inline constexpr double kSivBaseStep = 0.1;

/// Entries of a merged cohort ordered by (gamma, id).
std::vector<CohortEntry> cohort_entries(const std::vector<const VirtualPatient*>& merged);

/// Takes every m-th element, m = max(1, round(delta_gamma / base_step)),
/// puts k = 0 mod (alpha+1) in validation and the rest plus every anchor in
/// training. Throws EmptyCohort, StepTooCoarse (< alpha+2 elements),
/// InvalidArgument (alpha < 1, nonpositive step).
SIVPlan partition(const std::vector<CohortEntry>& cohort, const AnchorSet& anchors,
                  double delta_gamma, int alpha, double base_step = kSivBaseStep);

enum class SivProperty { AnchorInValidation = 1, TrainValOverlap = 2, BlockOrdering = 3 };

struct SivViolation {
  SivProperty property;
  std::string detail;
};

/// Empty when the plan keeps anchors out of validation, train and
/// validation disjoint, and each validation gamma at or above the gammas
/// of the training elements of the block before it.
std::vector<SivViolation> verify_plan(const SIVPlan& plan, const AnchorSet& anchors);

}  // namespace pathco
