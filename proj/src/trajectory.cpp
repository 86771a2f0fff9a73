#include "pathco/trajectory.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pathco/error.hpp"
#include "pathco/monotone.hpp"
#include "pathco/parallel.hpp"
#include "pathco/rng.hpp"

namespace pathco {

Subject VirtualPatient::as_subject() const { return Subject{id, ed, es, pathology}; }

Subject decode_segment(const TrajectorySegment& seg, double omega, const Geometry& grid,
                       std::uint64_t texture_seed, std::string id) {
  Subject s;
  s.id = std::move(id);
  s.pathology = seg.pathology;
  s.ed = decode(slerp(seg.source.ed, seg.target.ed, omega), grid, derive_seed(texture_seed, "ed"));
  s.es = decode(slerp(seg.source.es, seg.target.es, omega), grid, derive_seed(texture_seed, "es"));
  return s;
}

SeverityMapping make_mapping(std::vector<double> omega, std::vector<double> raw_gamma) {
  require(omega.size() == raw_gamma.size() && omega.size() >= 2, ErrorCode::InvalidArgument,
          "mapping needs at least two matching samples");
  SeverityMapping m;
  m.gamma = isotonic_regression(raw_gamma);
  m.omega = std::move(omega);
  m.raw_gamma = std::move(raw_gamma);
  return m;
}

SeverityMapping build_severity_mapping(const TrajectorySegment& seg, int J, const Geometry& grid,
                                       const SeverityFunction& f, const NormalizationStats& stats,
                                       unsigned jobs) {
  require(J >= 2, ErrorCode::InvalidArgument, fmt::format("J must be >= 2, got {}", J));
  std::vector<double> omega(J + 1), gamma(J + 1);
  parallel_for(static_cast<std::size_t>(J + 1), jobs, [&](std::size_t j) {
    omega[j] = static_cast<double>(j) / J;
    const Subject s = decode_segment(seg, omega[j], grid);
    gamma[j] = normalize_to_gamma(f(s), stats).gamma();
  });
  omega.back() = 1.0;
  return make_mapping(std::move(omega), std::move(gamma));
}

SeverityMapping build_severity_mapping(const TrajectorySegment& seg, int J, const Geometry& grid,
                                       const NormalizationStats& stats, unsigned jobs) {
  const Pathology p = stats.pathology;
  return build_severity_mapping(
      seg, J, grid, [p](const Subject& s) { return biomarker(s, p); }, stats, jobs);
}

std::vector<double> resample_weights(const SeverityMapping& mapping, int N) {
  require(N >= 2, ErrorCode::NTooSmall, fmt::format("N must be >= 2, got {}", N));
  const auto& g = mapping.gamma;
  require(g.size() >= 2, ErrorCode::NonMonotoneMapping, "mapping has fewer than two samples");
  for (std::size_t i = 1; i < g.size(); ++i) {
    require(g[i] >= g[i - 1], ErrorCode::NonMonotoneMapping, "mapping is not nondecreasing");
  }
  require(g.back() > g.front(), ErrorCode::NonMonotoneMapping,
          "mapping is flat; severity does not change along the segment");
  const MonotoneCubic spline(mapping.omega, g);
  const double lo = g.front();
  const double step = (g.back() - lo) / (N - 1);
  std::vector<double> out(N);
  out.front() = 0.0;
  out.back() = 1.0;
  for (int t = 1; t + 1 < N; ++t) out[t] = spline.inverse(lo + t * step);
  return out;
}

SegmentEnd encode_anchor(const Subject& subject, double gamma) {
  return {subject.id, gamma, encode(subject.ed), encode(subject.es)};
}

std::vector<TrajectorySegment> build_segments(const AnchorSet& anchors, Pathology pathology,
                                              const std::map<std::string, Subject>& subjects) {
  const auto roles = anchors.trajectory(pathology);
  require(roles.size() >= 2, ErrorCode::InvalidArgument,
          fmt::format("{} needs at least two anchors, has {}", to_string(pathology), roles.size()));
  std::vector<SegmentEnd> ends;
  for (const auto& role : roles) {
    const auto it = subjects.find(role.subject_id);
    require(it != subjects.end(), ErrorCode::InvalidArgument,
            fmt::format("anchor subject {} not supplied", role.subject_id));
    ends.push_back(encode_anchor(it->second, role.gamma));
  }
  std::vector<TrajectorySegment> segs;
  for (std::size_t k = 0; k + 1 < ends.size(); ++k) {
    segs.push_back({pathology, static_cast<int>(k), ends[k], ends[k + 1]});
  }
  return segs;
}

VirtualCohort synthesize_cohort(const AnchorSet& anchors, Pathology pathology,
                                const std::map<std::string, Subject>& subjects,
                                const NormalizationStats& stats, const SynthesisSpec& spec) {
  require(stats.pathology == pathology, ErrorCode::InvalidArgument,
          "statistics belong to a different pathology");
  const auto segs = build_segments(anchors, pathology, subjects);
  VirtualCohort cohort;
  cohort.pathology = pathology;
  cohort.regime = anchors.regime;
  for (const auto& seg : segs) {
    SegmentRecord rec;
    rec.index = seg.index;
    rec.source_id = seg.source.subject_id;
    rec.target_id = seg.target.subject_id;
    rec.source_gamma = seg.source.gamma;
    rec.target_gamma = seg.target.gamma;
    rec.source_ed = seg.source.ed;
    rec.source_es = seg.source.es;
    rec.target_ed = seg.target.ed;
    rec.target_es = seg.target.es;
    rec.mapping = build_severity_mapping(seg, spec.J, spec.grid, stats, spec.jobs);
    rec.omega_star = resample_weights(rec.mapping, spec.N);
    const double lo = rec.mapping.gamma.front();
    const double step = (rec.mapping.gamma.back() - lo) / (spec.N - 1);

    const std::size_t interior = static_cast<std::size_t>(spec.N - 2);
    std::vector<VirtualPatient> vps(interior);
    parallel_for(interior, spec.jobs, [&](std::size_t i) {
      const int t = static_cast<int>(i) + 1;
      VirtualPatient& vp = vps[i];
      vp.id = fmt::format("{}-s{}-t{:03d}", to_string(pathology), seg.index, t);
      vp.pathology = pathology;
      vp.segment = seg.index;
      vp.omega = rec.omega_star[t];
      vp.gamma = lo + t * step;
      const Subject s = decode_segment(seg, vp.omega, spec.grid, derive_seed(spec.seed, vp.id), vp.id);
      vp.achieved_gamma = severity_gamma(s, stats);
      vp.ed = s.ed;
      vp.es = s.es;
    });
    for (auto& vp : vps) cohort.patients.push_back(std::move(vp));
    cohort.segments.push_back(std::move(rec));
  }
  std::stable_sort(cohort.patients.begin(), cohort.patients.end(),
                   [](const VirtualPatient& a, const VirtualPatient& b) { return a.gamma < b.gamma; });
  return cohort;
}

TrajectorySegment segment_of(const VirtualCohort& cohort, const SegmentRecord& r) {
  return {cohort.pathology, r.index, {r.source_id, r.source_gamma, r.source_ed, r.source_es},
          {r.target_id, r.target_gamma, r.target_ed, r.target_es}};
}

std::vector<const VirtualPatient*> merge_cohorts(const std::vector<VirtualCohort>& cohorts) {
  std::vector<const VirtualPatient*> out;
  for (const auto& c : cohorts)
    for (const auto& p : c.patients) out.push_back(&p);
  std::sort(out.begin(), out.end(), [](const VirtualPatient* a, const VirtualPatient* b) {
    return a->gamma != b->gamma ? a->gamma < b->gamma : a->id < b->id;
  });
  return out;
}

}  // namespace pathco
