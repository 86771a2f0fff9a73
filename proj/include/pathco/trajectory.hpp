#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pathco/anchors.hpp"
#include "pathco/phantom.hpp"
#include "pathco/severity.hpp"

namespace pathco {

/// Biomarker of a subject (an f_d).
using SeverityFunction = std::function<double(const Subject&)>;

/// One end of a trajectory segment: an anchor with its encoded latents.
struct SegmentEnd {
  std::string subject_id;
  double gamma = 0.0;
  LatentVector ed;
  LatentVector es;
};

/// Trajectory between two adjacent anchors of one pathology. ED and ES
/// share the interpolation weight.
struct TrajectorySegment {
  Pathology pathology = Pathology::Other;
  int index = 0;
  SegmentEnd source;
  SegmentEnd target;
};

struct SeverityMapping {
  std::vector<double> omega;      // strictly increasing, 0 .. 1
  std::vector<double> raw_gamma;  // as measured
  std::vector<double> gamma;      // isotonic repair of raw_gamma
};

/// Decoded ED/ES pair at weight omega along the segment.
Subject decode_segment(const TrajectorySegment& seg, double omega, const Geometry& grid,
                       std::uint64_t texture_seed = 0, std::string id = {});

/// Severity mapping over omega = j/J, j = 0..J. Throws InvalidArgument for
/// J < 2; decode errors propagate.
SeverityMapping build_severity_mapping(const TrajectorySegment& seg, int J, const Geometry& grid,
                                       const SeverityFunction& f, const NormalizationStats& stats,
                                       unsigned jobs = 1);
SeverityMapping build_severity_mapping(const TrajectorySegment& seg, int J, const Geometry& grid,
                                       const NormalizationStats& stats, unsigned jobs = 1);

/// Mapping from given samples; applies the isotonic repair.
SeverityMapping make_mapping(std::vector<double> omega, std::vector<double> raw_gamma);

/// Weights whose mapped severities are equally spaced between the mapping's
/// endpoints, via inversion of a monotone cubic through the samples.
/// Throws NTooSmall (N < 2) and NonMonotoneMapping (flat or decreasing).
std::vector<double> resample_weights(const SeverityMapping& mapping, int N);

struct VirtualPatient {
  std::string id;
  Pathology pathology = Pathology::Other;
  double gamma = 0.0;           // target severity of the resampling grid
  double achieved_gamma = 0.0;  // severity re-measured on the decoded masks
  int segment = 0;
  double omega = 0.0;
  Phase ed;
  Phase es;

  Subject as_subject() const;
};

struct SegmentRecord {
  int index = 0;
  std::string source_id;
  std::string target_id;
  double source_gamma = 0.0;
  double target_gamma = 0.0;
  LatentVector source_ed, source_es, target_ed, target_es;
  SeverityMapping mapping;
  std::vector<double> omega_star;
};

struct VirtualCohort {
  Pathology pathology = Pathology::Other;
  Regime regime = Regime::A7;
  std::vector<SegmentRecord> segments;
  std::vector<VirtualPatient> patients;  // ascending gamma
};

struct SynthesisSpec {
  int N = 32;  // resampled states per segment, endpoints included
  int J = 50;  // auxiliary samples per segment
  Geometry grid = default_phantom_grid();
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

/// Encoded latents of a subject's two phases.
SegmentEnd encode_anchor(const Subject& subject, double gamma);

/// Segments between adjacent anchors of `pathology`, ascending severity.
/// Throws InvalidArgument with fewer than two anchors or a missing subject.
std::vector<TrajectorySegment> build_segments(const AnchorSet& anchors, Pathology pathology,
                                              const std::map<std::string, Subject>& subjects);

/// Virtual cohort of K*(N-2) patients for one pathology; the resampled end
/// points are the anchors themselves and are not emitted.
VirtualCohort synthesize_cohort(const AnchorSet& anchors, Pathology pathology,
                                const std::map<std::string, Subject>& subjects,
                                const NormalizationStats& stats, const SynthesisSpec& spec);

/// Segment rebuilt from a stored record.
TrajectorySegment segment_of(const VirtualCohort& cohort, const SegmentRecord& record);

/// All patients of several cohorts ordered by (gamma, id).
std::vector<const VirtualPatient*> merge_cohorts(const std::vector<VirtualCohort>& cohorts);

}  // namespace pathco
