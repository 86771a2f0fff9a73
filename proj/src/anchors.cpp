#include "pathco/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "pathco/error.hpp"

namespace pathco {

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::A7: return "A7";
    case Regime::A11: return "A11";
    case Regime::A19: return "A19";
  }
  return "A7";
}

Regime parse_regime(std::string_view name) {
  if (name == "A7") return Regime::A7;
  if (name == "A11") return Regime::A11;
  if (name == "A19") return Regime::A19;
  fail(ErrorCode::InvalidArgument, fmt::format("unknown anchor regime '{}'", name));
}

namespace {

// Targets in the order roles are claimed; later regimes only append, which
// keeps A7 within A11 within A19.
std::vector<int> claim_order(Regime regime) {
  std::vector<int> order{5, 95};
  if (regime != Regime::A7) order.push_back(50);
  if (regime == Regime::A19) {
    order.push_back(25);
    order.push_back(75);
  }
  return order;
}

}  // namespace

std::vector<double> anchor_gamma_targets(Regime regime) {
  auto order = claim_order(regime);
  std::sort(order.begin(), order.end());
  std::vector<double> gammas;
  for (int k : order) gammas.push_back(k / 100.0);
  return gammas;
}

std::vector<std::string> AnchorSet::subject_ids() const {
  std::set<std::string> ids;
  for (const auto& a : roles) ids.insert(a.subject_id);
  return {ids.begin(), ids.end()};
}

std::vector<Anchor> AnchorSet::trajectory(Pathology pathology) const {
  std::vector<Anchor> out;
  for (const auto& a : roles) {
    if (a.pathology == pathology) out.push_back(a);
  }
  std::sort(out.begin(), out.end(),
            [](const Anchor& a, const Anchor& b) { return a.gamma < b.gamma; });
  return out;
}

std::vector<Pathology> AnchorSet::pathologies() const {
  std::vector<Pathology> out;
  for (const auto& a : roles) {
    if (std::find(out.begin(), out.end(), a.pathology) == out.end()) out.push_back(a.pathology);
  }
  std::sort(out.begin(), out.end());
  return out;
}

AnchorSet select_anchors(const std::vector<SubjectRecord>& cohort,
                         const std::map<Pathology, NormalizationStats>& stats, Regime regime) {
  const bool any_healthy = std::any_of(cohort.begin(), cohort.end(), [](const SubjectRecord& r) {
    return r.pathology == Pathology::Healthy;
  });
  require(any_healthy, ErrorCode::MissingHealthy, "cohort has no Healthy subject");
  require(!stats.empty(), ErrorCode::MissingPathology, "no pathology statistics supplied");

  AnchorSet set;
  set.regime = regime;
  for (const auto& [pathology, st] : stats) {
    require(pathology != Pathology::Healthy && pathology != Pathology::Other,
            ErrorCode::InvalidArgument, "statistics must be keyed by a disease pathology");
    std::set<std::string> claimed;
    std::vector<Anchor> roles;
    for (int k : claim_order(regime)) {
      const Pathology pool = k == 5 ? Pathology::Healthy : pathology;
      const double target = biomarker_at_gamma(st, k / 100.0);
      const SubjectRecord* best = nullptr;
      double best_dist = std::numeric_limits<double>::infinity();
      for (const auto& r : cohort) {
        if (r.pathology != pool || claimed.count(r.id)) continue;
        const auto it = r.biomarkers.find(pathology);
        if (it == r.biomarkers.end()) continue;
        const double dist = std::abs(it->second - target);
        if (dist < best_dist || (dist == best_dist && best && r.id < best->id)) {
          best = &r;
          best_dist = dist;
        }
      }
      if (!best) {
        fail(pool == Pathology::Healthy ? ErrorCode::MissingHealthy : ErrorCode::MissingPathology,
             fmt::format("no unclaimed {} subject with a {} biomarker for target P{}",
                         to_string(pool), to_string(pathology), k));
      }
      claimed.insert(best->id);
      const double b = best->biomarkers.at(pathology);
      roles.push_back({best->id, pathology, normalize_to_gamma(b, st).gamma(), k, b});
    }
    std::sort(roles.begin(), roles.end(),
              [](const Anchor& a, const Anchor& b) { return a.gamma < b.gamma; });
    for (std::size_t i = 1; i < roles.size(); ++i) {
      require(roles[i].gamma > roles[i - 1].gamma, ErrorCode::DegenerateAnchors,
              fmt::format("{} anchors {} and {} share gamma {}", to_string(pathology),
                          roles[i - 1].subject_id, roles[i].subject_id, roles[i].gamma));
    }
    set.roles.insert(set.roles.end(), roles.begin(), roles.end());
  }
  std::stable_sort(set.roles.begin(), set.roles.end(), [](const Anchor& a, const Anchor& b) {
    return a.pathology != b.pathology ? a.pathology < b.pathology : a.gamma < b.gamma;
  });
  return set;
}

}  // namespace pathco
