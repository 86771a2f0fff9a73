#include "pathco/serialize.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "pathco/error.hpp"
#include "pathco/volume_io.hpp"

namespace pathco {

namespace fs = std::filesystem;

namespace {

template <class T>
T get(const Json& j, const char* key) {
  require(j.is_object() && j.contains(key), ErrorCode::MalformedHeader,
          fmt::format("missing field '{}'", key));
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::MalformedHeader, fmt::format("field '{}': {}", key, e.what()));
  }
}

std::string hex(const unsigned char* md, unsigned len) {
  std::string out;
  for (unsigned i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
  return out;
}

std::string rel(const fs::path& p, const fs::path& base) {
  return p.lexically_relative(base).generic_string();
}

}  // namespace

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoFailure, fmt::format("cannot write {}", path.string()));
  out << text;
  require(static_cast<bool>(out), ErrorCode::IoFailure, fmt::format("write failed: {}", path.string()));
}

Json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoFailure, fmt::format("cannot read {}", path.string()));
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    fail(ErrorCode::MalformedHeader, fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  require(EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) == 1,
          ErrorCode::InvariantViolation, "sha256 failed");
  return hex(md, len);
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoFailure, fmt::format("cannot read {}", path.string()));
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  return hex(md, len);
}

Json to_json(const NormalizationStats& stats) {
  Json pts = Json::array();
  for (const auto& p : stats.table) pts.push_back({p.rank, p.value});
  return {{"pathology", to_string(stats.pathology)},
          {"direction", to_string(stats.direction)},
          {"percentiles", pts}};
}

NormalizationStats stats_from_json(const Json& j) {
  NormalizationStats s;
  s.pathology = parse_pathology(get<std::string>(j, "pathology"));
  s.direction = parse_direction(get<std::string>(j, "direction"));
  for (const auto& p : get<Json>(j, "percentiles")) {
    require(p.is_array() && p.size() == 2, ErrorCode::MalformedHeader, "percentile entry must be [k, v]");
    s.table.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  s.validate();
  return s;
}

Json to_json(const AnchorSet& anchors) {
  Json list = Json::array();
  for (const auto& a : anchors.roles) {
    list.push_back({{"subject_id", a.subject_id},
                    {"pathology", to_string(a.pathology)},
                    {"gamma", a.gamma},
                    {"target_percentile", a.target_percentile},
                    {"biomarker", a.biomarker}});
  }
  return {{"regime", to_string(anchors.regime)}, {"anchors", list}, {"size", anchors.size()}};
}

AnchorSet anchors_from_json(const Json& j) {
  AnchorSet s;
  s.regime = parse_regime(get<std::string>(j, "regime"));
  for (const auto& a : get<Json>(j, "anchors")) {
    Anchor r;
    r.subject_id = get<std::string>(a, "subject_id");
    r.pathology = parse_pathology(get<std::string>(a, "pathology"));
    r.gamma = get<double>(a, "gamma");
    r.target_percentile = get<int>(a, "target_percentile");
    r.biomarker = a.value("biomarker", 0.0);
    s.roles.push_back(r);
  }
  return s;
}

Json to_json(const LatentVector& z) { return Json(z.params); }

LatentVector latent_from_json(const Json& j) {
  require(j.is_array() && j.size() == LatentVector::kSize, ErrorCode::MalformedHeader,
          "latent vector must have 8 entries");
  LatentVector z;
  for (std::size_t i = 0; i < LatentVector::kSize; ++i) z[i] = j[i].get<double>();
  return z;
}

Json to_json(const SIVPlan& plan) {
  Json seq = Json::array();
  for (const auto& e : plan.sequence) seq.push_back({{"id", e.id}, {"gamma", e.gamma}});
  return {{"delta_gamma", plan.delta_gamma}, {"alpha", plan.alpha},   {"stride", plan.stride},
          {"a_max", plan.a_max},             {"sequence", seq},       {"train_ids", plan.train_ids},
          {"val_ids", plan.val_ids}};
}

SIVPlan plan_from_json(const Json& j) {
  SIVPlan p;
  p.delta_gamma = get<double>(j, "delta_gamma");
  p.alpha = get<int>(j, "alpha");
  p.stride = j.value("stride", 1);
  p.a_max = j.value("a_max", 0);
  if (j.contains("sequence"))
    for (const auto& e : j["sequence"]) p.sequence.push_back({get<std::string>(e, "id"), get<double>(e, "gamma")});
  p.train_ids = get<std::vector<std::string>>(j, "train_ids");
  p.val_ids = get<std::vector<std::string>>(j, "val_ids");
  return p;
}

Json to_json(const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  Json dice, hd;
  for (int i = 0; i < 3; ++i) {
    const std::string name(to_string(kReportLabels[i]));
    dice[name] = r.dice[i];
    hd[name] = opt(r.hd95[i]);
  }
  dice["Avg"] = r.dice_avg;
  hd["Avg"] = opt(r.hd95_avg);
  Json j = {{"case", r.case_id}, {"dice", dice}, {"hd95_mm", hd}};
  if (r.losses) {
    j["losses"] = {{"L_Corr", r.losses->corr}, {"L_Sm", r.losses->sm}, {"L_imgSSIM", r.losses->img_ssim},
                   {"L_LPIPS", r.losses->lpips}, {"L_Mask", r.losses->mask}};
  }
  if (r.composites) {
    j["composites"] = {{"L_Align", r.composites->align}, {"L_Fid", r.composites->fid},
                       {"L_Mask", r.composites->mask}, {"L_Total", r.composites->total}};
  }
  return j;
}

Json to_json(const ActivationResult& result, const std::string& mask_path) {
  Json scores = Json::array();
  for (const auto& row : result.scores) {
    scores.push_back({{"delta_gamma", row.spec.delta_gamma},
                      {"alpha", row.spec.alpha},
                      {"psi_rv", row.psi[0]},
                      {"psi_myo", row.psi[1]},
                      {"psi_pool", row.psi[2]}});
  }
  Json selected;
  for (int c = 0; c < 3; ++c) {
    selected[std::string(to_string(kForegroundLabels[c]))] = {
        {"delta_gamma", result.selection.spec[c].delta_gamma},
        {"alpha", result.selection.spec[c].alpha},
        {"psi", result.selection.psi[c]}};
  }
  return {{"scores", scores}, {"selected", selected}, {"output_mask", mask_path}};
}

SubjectFiles subject_files(const fs::path& dir, const std::string& id) {
  const fs::path d = dir / id;
  return {d / "ed_image.plv", d / "ed_mask.plv", d / "es_image.plv", d / "es_mask.plv"};
}

void store_subject(const SubjectFiles& f, const Subject& s) {
  store_volume(f.ed_image, s.ed.image);
  store_volume(f.ed_mask, s.ed.mask);
  store_volume(f.es_image, s.es.image);
  store_volume(f.es_mask, s.es.mask);
}

Subject load_subject(const SubjectFiles& f, std::string id, Pathology pathology) {
  Subject s;
  s.id = std::move(id);
  s.pathology = pathology;
  s.ed = {load_image(f.ed_image), load_mask(f.ed_mask)};
  s.es = {load_image(f.es_image), load_mask(f.es_mask)};
  s.validate();
  return s;
}

Json to_json(const SubjectFiles& f, const fs::path& base) {
  return {{"ed_image", rel(f.ed_image, base)},
          {"ed_mask", rel(f.ed_mask, base)},
          {"es_image", rel(f.es_image, base)},
          {"es_mask", rel(f.es_mask, base)}};
}

SubjectFiles subject_files_from_json(const Json& j, const fs::path& base) {
  return {base / get<std::string>(j, "ed_image"), base / get<std::string>(j, "ed_mask"),
          base / get<std::string>(j, "es_image"), base / get<std::string>(j, "es_mask")};
}

void save_cohort(const fs::path& dir, const VirtualCohort& cohort) {
  Json segs = Json::array();
  for (const auto& s : cohort.segments) {
    segs.push_back({{"index", s.index},
                    {"source_id", s.source_id},
                    {"target_id", s.target_id},
                    {"source_gamma", s.source_gamma},
                    {"target_gamma", s.target_gamma},
                    {"source_ed", to_json(s.source_ed)},
                    {"source_es", to_json(s.source_es)},
                    {"target_ed", to_json(s.target_ed)},
                    {"target_es", to_json(s.target_es)},
                    {"omega", s.mapping.omega},
                    {"raw_gamma", s.mapping.raw_gamma},
                    {"gamma", s.mapping.gamma},
                    {"omega_star", s.omega_star}});
  }
  Json pts = Json::array();
  for (const auto& p : cohort.patients) {
    const auto files = subject_files(dir, p.id);
    store_subject(files, p.as_subject());
    pts.push_back({{"id", p.id},
                   {"gamma", p.gamma},
                   {"achieved_gamma", p.achieved_gamma},
                   {"omega", p.omega},
                   {"segment", p.segment},
                   {"files", to_json(files, dir)}});
  }
  write_json(dir / "manifest.json", {{"pathology", to_string(cohort.pathology)},
                                     {"regime", to_string(cohort.regime)},
                                     {"segments", segs},
                                     {"patients", pts}});
}

VirtualCohort load_cohort(const fs::path& dir) {
  const Json j = read_json(dir / "manifest.json");
  VirtualCohort c;
  c.pathology = parse_pathology(get<std::string>(j, "pathology"));
  c.regime = parse_regime(get<std::string>(j, "regime"));
  for (const auto& s : get<Json>(j, "segments")) {
    SegmentRecord r;
    r.index = get<int>(s, "index");
    r.source_id = get<std::string>(s, "source_id");
    r.target_id = get<std::string>(s, "target_id");
    r.source_gamma = get<double>(s, "source_gamma");
    r.target_gamma = get<double>(s, "target_gamma");
    r.source_ed = latent_from_json(get<Json>(s, "source_ed"));
    r.source_es = latent_from_json(get<Json>(s, "source_es"));
    r.target_ed = latent_from_json(get<Json>(s, "target_ed"));
    r.target_es = latent_from_json(get<Json>(s, "target_es"));
    r.mapping.omega = get<std::vector<double>>(s, "omega");
    r.mapping.raw_gamma = get<std::vector<double>>(s, "raw_gamma");
    r.mapping.gamma = get<std::vector<double>>(s, "gamma");
    r.omega_star = get<std::vector<double>>(s, "omega_star");
    c.segments.push_back(std::move(r));
  }
  for (const auto& p : get<Json>(j, "patients")) {
    VirtualPatient vp;
    vp.id = get<std::string>(p, "id");
    vp.pathology = c.pathology;
    vp.gamma = get<double>(p, "gamma");
    vp.achieved_gamma = p.value("achieved_gamma", vp.gamma);
    vp.omega = get<double>(p, "omega");
    vp.segment = get<int>(p, "segment");
    const Subject s = load_subject(subject_files_from_json(get<Json>(p, "files"), dir), vp.id, c.pathology);
    vp.ed = s.ed;
    vp.es = s.es;
    c.patients.push_back(std::move(vp));
  }
  return c;
}

void save_lattice(const fs::path& dir, const Lattice& lattice, const SampleFileMap& sample_files) {
  Json cells = Json::array();
  for (const auto& e : lattice.cells) {
    Json params = e.kind == ExpertKind::Exemplar
                      ? Json{{"k", e.k}, {"tau", e.tau}, {"val_dice", e.val_dice}}
                      : Json{{"dir", e.external_dir.generic_string()}};
    cells.push_back({{"delta_gamma", e.spec.delta_gamma},
                     {"alpha", e.spec.alpha},
                     {"kind", to_string(e.kind)},
                     {"params", params},
                     {"sample_ids", e.sample_ids}});
  }
  write_json(dir / "lattice.json", {{"D", lattice.D}, {"Q", lattice.Q}, {"cells", cells}});
  if (!lattice.bank) return;
  Json samples = Json::array();
  const auto& bank = *lattice.bank;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto& s = bank[i];
    fs::path img, msk;
    if (const auto it = sample_files.find(s.id); it != sample_files.end()) {
      std::tie(img, msk) = it->second;
    } else {
      img = dir / "bank" / (s.id + "_image.plv");
      msk = dir / "bank" / (s.id + "_mask.plv");
      store_volume(img, s.image);
      store_volume(msk, s.mask);
    }
    samples.push_back({{"id", s.id},
                       {"subject_id", s.subject_id},
                       {"image", rel(img, dir)},
                       {"mask", rel(msk, dir)}});
  }
  write_json(dir / "bank.json", {{"samples", samples}});
}

Lattice load_lattice(const fs::path& dir) {
  const Json j = read_json(dir / "lattice.json");
  Lattice lat;
  lat.D = get<std::vector<double>>(j, "D");
  lat.Q = get<std::vector<int>>(j, "Q");
  for (const auto& c : get<Json>(j, "cells")) {
    Expert e;
    e.spec = {get<double>(c, "delta_gamma"), get<int>(c, "alpha")};
    e.kind = parse_expert_kind(get<std::string>(c, "kind"));
    const Json& p = get<Json>(c, "params");
    if (e.kind == ExpertKind::Exemplar) {
      e.k = get<int>(p, "k");
      e.tau = get<double>(p, "tau");
      e.val_dice = p.value("val_dice", 0.0);
    } else {
      e.external_dir = get<std::string>(p, "dir");
      e.k = 0;
      e.tau = 0.0;
    }
    e.sample_ids = get<std::vector<std::string>>(c, "sample_ids");
    lat.cells.push_back(std::move(e));
  }
  if (fs::exists(dir / "bank.json")) {
    auto bank = std::make_shared<SampleBank>();
    for (const auto& s : get<Json>(read_json(dir / "bank.json"), "samples")) {
      bank->add(get<std::string>(s, "id"), get<std::string>(s, "subject_id"),
                Phase{load_image(dir / get<std::string>(s, "image")),
                      load_mask(dir / get<std::string>(s, "mask"))});
    }
    lat.bank = std::move(bank);
  }
  return lat;
}

}  // namespace pathco
