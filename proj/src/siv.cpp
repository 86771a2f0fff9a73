#include "pathco/siv.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "pathco/error.hpp"

namespace pathco {

std::vector<CohortEntry> cohort_entries(const std::vector<const VirtualPatient*>& merged) {
  std::vector<CohortEntry> out;
  out.reserve(merged.size());
  for (const auto* p : merged) out.push_back({p->id, p->gamma});
  return out;
}

SIVPlan partition(const std::vector<CohortEntry>& cohort, const AnchorSet& anchors,
                  double delta_gamma, int alpha, double base_step) {
  require(!cohort.empty(), ErrorCode::EmptyCohort, "cohort has no virtual patients");
  require(alpha >= 1, ErrorCode::InvalidArgument, fmt::format("alpha must be >= 1, got {}", alpha));
  require(delta_gamma > 0 && base_step > 0, ErrorCode::InvalidArgument,
          "delta_gamma and base step must be positive");

  SIVPlan plan;
  plan.delta_gamma = delta_gamma;
  plan.alpha = alpha;
  plan.stride = std::max(1, static_cast<int>(std::lround(delta_gamma / base_step)));
  for (std::size_t i = 0; i < cohort.size(); i += plan.stride) plan.sequence.push_back(cohort[i]);
  require(plan.sequence.size() >= static_cast<std::size_t>(alpha) + 2, ErrorCode::StepTooCoarse,
          fmt::format("delta_gamma {} leaves {} elements, alpha {} needs {}", delta_gamma,
                      plan.sequence.size(), alpha, alpha + 2));
  plan.a_max = static_cast<int>(plan.sequence.size()) - 1;

  for (std::size_t k = 0; k < plan.sequence.size(); ++k) {
    auto& dst = k % (alpha + 1) == 0 ? plan.val_ids : plan.train_ids;
    dst.push_back(plan.sequence[k].id);
  }
  for (const auto& id : anchors.subject_ids()) plan.train_ids.push_back(id);
  return plan;
}

std::vector<SivViolation> verify_plan(const SIVPlan& plan, const AnchorSet& anchors) {
  std::vector<SivViolation> out;
  const auto anchor_ids = anchors.subject_ids();
  const std::set<std::string> anchor_set(anchor_ids.begin(), anchor_ids.end());
  const std::set<std::string> train(plan.train_ids.begin(), plan.train_ids.end());

  for (const auto& id : plan.val_ids) {
    if (anchor_set.count(id)) {
      out.push_back({SivProperty::AnchorInValidation, fmt::format("anchor {} in validation", id)});
    }
    if (train.count(id)) {
      out.push_back({SivProperty::TrainValOverlap, fmt::format("{} in both train and validation", id)});
    }
  }

  const std::set<std::string> val(plan.val_ids.begin(), plan.val_ids.end());
  const int n = static_cast<int>(plan.sequence.size());
  for (int k = 0; k < n; ++k) {
    if (!val.count(plan.sequence[k].id)) continue;
    for (int j = std::max(0, k - plan.alpha); j < k; ++j) {
      const auto& prev = plan.sequence[j];
      if (train.count(prev.id) && prev.gamma > plan.sequence[k].gamma) {
        out.push_back({SivProperty::BlockOrdering,
                       fmt::format("validation {} (gamma {}) precedes harder training {} (gamma {})",
                                   plan.sequence[k].id, plan.sequence[k].gamma, prev.id, prev.gamma)});
      }
    }
  }
  return out;
}

}  // namespace pathco
