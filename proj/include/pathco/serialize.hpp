#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "pathco/activation.hpp"
#include "pathco/anchors.hpp"
#include "pathco/lattice.hpp"
#include "pathco/metrics.hpp"
#include "pathco/phantom.hpp"
#include "pathco/severity.hpp"
#include "pathco/siv.hpp"
#include "pathco/trajectory.hpp"

namespace pathco {

using Json = nlohmann::json;

/// Pretty-printed with a trailing newline; parent directories created.
void write_json(const std::filesystem::path& path, const Json& j);
/// Throws IoFailure / MalformedHeader.
Json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

Json to_json(const NormalizationStats& stats);
NormalizationStats stats_from_json(const Json& j);

Json to_json(const AnchorSet& anchors);
AnchorSet anchors_from_json(const Json& j);

Json to_json(const LatentVector& z);
LatentVector latent_from_json(const Json& j);

Json to_json(const SIVPlan& plan);
SIVPlan plan_from_json(const Json& j);

Json to_json(const MetricReport& report);
Json to_json(const ActivationResult& result, const std::string& mask_path);

/// Files of a subject: <dir>/<id>/{ed,es}_{image,mask}.plv
struct SubjectFiles {
  std::filesystem::path ed_image, ed_mask, es_image, es_mask;
};
SubjectFiles subject_files(const std::filesystem::path& dir, const std::string& id);
void store_subject(const SubjectFiles& files, const Subject& subject);
Subject load_subject(const SubjectFiles& files, std::string id, Pathology pathology);
Json to_json(const SubjectFiles& files, const std::filesystem::path& base);
SubjectFiles subject_files_from_json(const Json& j, const std::filesystem::path& base);

/// Cohort directory: manifest.json {pathology, regime, segments, patients}
/// plus per-patient volumes.
void save_cohort(const std::filesystem::path& dir, const VirtualCohort& cohort);
VirtualCohort load_cohort(const std::filesystem::path& dir);

/// lattice.json {D, Q, cells:[{delta_gamma, alpha, kind, params, sample_ids}]}
/// and bank.json listing sample volumes. Samples found in `sample_files`
/// are referenced relative to `dir`; the rest are written under dir/bank.
using SampleFileMap = std::map<std::string, std::pair<std::filesystem::path, std::filesystem::path>>;
void save_lattice(const std::filesystem::path& dir, const Lattice& lattice,
                  const SampleFileMap& sample_files = {});
Lattice load_lattice(const std::filesystem::path& dir);

}  // namespace pathco
