#pragma once

#include <map>
#include <string>
#include <vector>

#include "pathco/severity.hpp"

namespace pathco {

enum class Regime { A7, A11, A19 };

std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view name);

/// Severity targets of a regime, ascending.
std::vector<double> anchor_gamma_targets(Regime regime);

/// One anchor role: a subject pinned to a target severity on one
/// pathology's trajectory. A healthy subject can hold roles on several
/// trajectories.
struct Anchor {
  std::string subject_id;
  Pathology pathology = Pathology::Other;  // trajectory the role belongs to
  double gamma = 0.0;
  int target_percentile = 0;
  double biomarker = 0.0;
};

struct AnchorSet {
  Regime regime = Regime::A7;
  /// Roles sorted by (pathology, gamma).
  std::vector<Anchor> roles;

  /// Distinct subject ids, sorted. |A| is the size of this list.
  std::vector<std::string> subject_ids() const;
  std::size_t size() const { return subject_ids().size(); }
  /// Roles on one trajectory, ascending gamma.
  std::vector<Anchor> trajectory(Pathology pathology) const;
  std::vector<Pathology> pathologies() const;
};

/// A subject's tag and its biomarker under every severity function.
struct SubjectRecord {
  std::string id;
  Pathology pathology = Pathology::Other;
  std::map<Pathology, double> biomarkers;
};

/// Per pathology: the Healthy subject nearest the gamma=0.05 biomarker, and
/// the pathology subjects nearest each further regime target (ties to the
/// lower id; one subject serves at most one role per trajectory). Throws
/// MissingHealthy, MissingPathology, DegenerateAnchors.
AnchorSet select_anchors(const std::vector<SubjectRecord>& cohort,
                         const std::map<Pathology, NormalizationStats>& stats, Regime regime);

}  // namespace pathco
