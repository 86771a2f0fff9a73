#include "pathco/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "pathco/activation.hpp"
#include "pathco/error.hpp"
#include "pathco/lattice.hpp"
#include "pathco/parallel.hpp"
#include "pathco/phantom.hpp"
#include "pathco/rng.hpp"
#include "pathco/severity.hpp"
#include "pathco/siv.hpp"
#include "pathco/trajectory.hpp"
#include "pathco/volume_io.hpp"

namespace pathco {

namespace fs = std::filesystem;

namespace {

constexpr int kFormatVersion = 1;

// ---- configuration -------------------------------------------------------

[[noreturn]] void config_fail(const std::string& msg) { fail(ErrorCode::ConfigError, msg); }

void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) config_fail(fmt::format("{} must be an object", where));
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      config_fail(fmt::format("unknown key '{}' in {}", key, where));
  }
}

template <class T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    config_fail(fmt::format("'{}': {}", key, e.what()));
  }
}

void check_dir(const std::string& d, const char* name) {
  const fs::path p(d);
  if (d.empty() || p.is_absolute()) config_fail(fmt::format("{} must be a nonempty relative path", name));
  for (const auto& part : p)
    if (part == "..") config_fail(fmt::format("{} must stay inside the output directory", name));
}

void validate(const PipelineConfig& c) {
  check_dir(c.cohort_dir, "cohort_dir");
  check_dir(c.lattice_dir, "lattice_dir");
  check_dir(c.reports_dir, "reports_dir");
  const std::set<std::string> dirs{c.cohort_dir, c.lattice_dir, c.reports_dir, "population", "severity",
                                   "anchors", "siv", "testset", "inference"};
  if (dirs.size() != 9) config_fail("output directories must be distinct");
  if (c.pathologies.empty()) config_fail("pathology list is empty");
  std::set<Pathology> seen;
  for (auto p : c.pathologies) {
    if (p == Pathology::Healthy || p == Pathology::Other)
      config_fail(fmt::format("{} is not a disease trajectory", to_string(p)));
    if (!seen.insert(p).second) config_fail(fmt::format("pathology {} listed twice", to_string(p)));
  }
  if (c.N < 3) config_fail("N must be >= 3");
  if (c.J < 2) config_fail("J must be >= 2");
  for (int a = 0; a < 3; ++a) {
    if (c.grid.dims[a] < 8) config_fail("grid dims must be >= 8");
    if (!(c.grid.spacing[a] > 0)) config_fail("grid spacing must be positive");
  }
  if (c.healthy < 2 || c.per_pathology < 2) config_fail("population needs >= 2 subjects per group");
  if (c.test_cases_per_pathology < 1) config_fail("test cases per pathology must be >= 1");
  for (double d : c.D)
    if (!(d > 0) || !std::isfinite(d)) config_fail("D entries must be positive");
  for (int q : c.Q)
    if (q < 1) config_fail("Q entries must be >= 1");
}

// ---- stage bookkeeping ---------------------------------------------------

struct StageInfo {
  Stage stage;
  fs::path dir;  // relative to out
  Json section;
};

std::vector<std::string> list_files(const fs::path& out, const fs::path& dir) {
  std::vector<std::string> files;
  if (!fs::exists(out / dir)) return files;
  for (const auto& e : fs::recursive_directory_iterator(out / dir))
    if (e.is_regular_file()) files.push_back(e.path().lexically_relative(out).generic_string());
  std::sort(files.begin(), files.end());
  return files;
}

struct InferOutput {
  std::vector<std::string> image_ids;
  std::vector<LabelMask> masks;
  std::vector<LabelMask> truths;
  std::vector<std::vector<double>> cell_dice;  // [cell][image]
};

double foreground_dice(const LabelMask& a, const LabelMask& b) {
  double d = 0.0;
  for (auto c : kForegroundLabels) d += dice3d(a, b, c);
  return d / 3.0;
}

Json cell_json(const ExpertSpec& s) { return {{"delta_gamma", s.delta_gamma}, {"alpha", s.alpha}}; }

class Runner {
 public:
  Runner(const PipelineConfig& cfg, const RunOptions& opt) : cfg_(cfg), opt_(opt), out_(opt.out) {}

  RunReport run();

 private:
  void log(const std::string& s) const {
    if (opt_.log) opt_.log(s);
  }

  std::vector<StageInfo> stages() const;
  void compute(Stage s);
  void load(Stage s);
  void need(Stage s) {
    if (!ready_[static_cast<int>(s)]) {
      load(s);
      ready_[static_cast<int>(s)] = true;
    }
  }

  void do_population();
  void do_severity();
  void do_anchors();
  void do_synthesis();
  void do_siv();
  void do_lattice();
  void do_testset();
  void do_infer();
  void do_eval();

  void load_population();
  void load_severity();
  void load_synthesis();
  void load_siv();
  void load_testset();
  void load_infer();

  std::map<std::string, Subject> anchor_subjects();
  const PhantomSubject& population_subject(const std::string& id) const;

  const PipelineConfig& cfg_;
  const RunOptions& opt_;
  fs::path out_;
  std::array<bool, kStageCount> ready_{};
  RunReport report_;

  std::vector<PhantomSubject> population_;
  SeverityTable severity_;
  AnchorSet anchors_;
  std::vector<VirtualCohort> cohorts_;
  std::map<ExpertSpec, SIVPlan> plans_;
  Lattice lattice_;
  std::vector<TestCase> tests_;
  InferOutput infer_;
};

std::vector<StageInfo> Runner::stages() const {
  const auto& c = cfg_;
  Json grid = {{"dims", {c.grid.dims.nx, c.grid.dims.ny, c.grid.dims.nz}},
               {"spacing_mm", {c.grid.spacing.sx, c.grid.spacing.sy, c.grid.spacing.sz}}};
  std::vector<std::string> paths;
  for (auto p : c.pathologies) paths.emplace_back(to_string(p));
  const Json w = to_json(c)["loss_weights"];
  return {
      {Stage::Population, "population",
       {{"grid", grid}, {"healthy", c.healthy}, {"per_pathology", c.per_pathology}, {"pathologies", paths},
        {"seed", c.seed}}},
      {Stage::Severity, "severity", {{"pathologies", paths}}},
      {Stage::Anchors, "anchors", {{"regime", to_string(c.regime)}}},
      {Stage::Synthesis, c.cohort_dir, {{"N", c.N}, {"J", c.J}, {"seed", c.seed}, {"dir", c.cohort_dir}}},
      {Stage::Siv, "siv", {{"D", c.D}, {"Q", c.Q}}},
      {Stage::Lattice, c.lattice_dir, {{"D", c.D}, {"Q", c.Q}, {"dir", c.lattice_dir}}},
      {Stage::TestSet, "testset", {{"cases", c.test_cases_per_pathology}, {"seed", c.seed}}},
      {Stage::Infer, "inference", Json::object()},
      {Stage::Eval, c.reports_dir, {{"dir", c.reports_dir}, {"loss_weights", w}}},
  };
}

RunReport Runner::run() {
  fs::create_directories(out_);
  const fs::path manifest_path = out_ / "manifest.json";
  Json old = fs::exists(manifest_path) ? read_json(manifest_path) : Json::object();
  std::map<std::string, Json> old_stages;
  if (old.contains("stages"))
    for (const auto& s : old["stages"]) old_stages[s.value("name", "")] = s;

  write_json(out_ / "config.json", to_json(cfg_));
  std::string prev = sha256_hex("pathco");
  std::vector<Json> records;
  for (const auto& info : stages()) {
    const std::string name(to_string(info.stage));
    const std::string hash = sha256_hex(
        Json{{"stage", name}, {"format", kFormatVersion}, {"section", info.section}, {"prev", prev}}.dump());
    prev = hash;
    if (info.stage > opt_.until) {
      if (old_stages.count(name)) records.push_back(old_stages[name]);
      continue;
    }
    bool cached = false;
    if (const auto it = old_stages.find(name); it != old_stages.end() && it->second.value("hash", "") == hash) {
      cached = true;
      for (const auto& f : it->second["files"]) {
        const fs::path p = out_ / f["path"].get<std::string>();
        if (!fs::exists(p) || sha256_file(p) != f["sha256"].get<std::string>()) {
          cached = false;
          break;
        }
      }
    }
    StageRecord rec{info.stage, hash, cached, {}};
    Json files = Json::array();
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (cached) {
        for (const auto& f : old_stages[name]["files"]) rec.files.push_back(f["path"].get<std::string>());
        files = old_stages[name]["files"];
      } else {
        fs::remove_all(out_ / info.dir);
        compute(info.stage);
        ready_[static_cast<int>(info.stage)] = true;
        rec.files = list_files(out_, info.dir);
        for (const auto& f : rec.files) files.push_back({{"path", f}, {"sha256", sha256_file(out_ / f)}});
      }
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("stage {}: {}", name, e.detail()));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::InvariantViolation, fmt::format("stage {}: {}", name, e.what()));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log(fmt::format("{:<10} {} ({:.1f} s, {} files)", name, cached ? "cached" : "done", secs, rec.files.size()));
    records.push_back({{"name", name}, {"hash", hash}, {"files", files}});
    report_.stages.push_back(std::move(rec));
    write_json(manifest_path, {{"format", kFormatVersion}, {"config", to_json(cfg_)}, {"stages", records}});
  }
  if (opt_.until >= Stage::Eval) {
    // Report numbers come from the persisted reports so cached runs agree.
    const Json m = read_json(out_ / cfg_.reports_dir / "metrics.json");
    report_.activation_dice = m["activation_mean_dice"].get<double>();
    report_.worst_cell_dice = m["worst_cell_dice"].get<double>();
    report_.median_cell_dice = m["median_cell_dice"].get<double>();
    for (const auto& c : m["cells"])
      report_.cells.push_back({{c["delta_gamma"].get<double>(), c["alpha"].get<int>()}, c["mean_dice"].get<double>()});
  }
  return report_;
}

void Runner::compute(Stage s) {
  switch (s) {
    case Stage::Population: return do_population();
    case Stage::Severity: return do_severity();
    case Stage::Anchors: return do_anchors();
    case Stage::Synthesis: return do_synthesis();
    case Stage::Siv: return do_siv();
    case Stage::Lattice: return do_lattice();
    case Stage::TestSet: return do_testset();
    case Stage::Infer: return do_infer();
    case Stage::Eval: return do_eval();
  }
}

void Runner::load(Stage s) {
  switch (s) {
    case Stage::Population: return load_population();
    case Stage::Severity: return load_severity();
    case Stage::Anchors:
      anchors_ = anchors_from_json(read_json(out_ / "anchors" / "anchors.json"));
      return;
    case Stage::Synthesis: return load_synthesis();
    case Stage::Siv: return load_siv();
    case Stage::Lattice:
      lattice_ = load_lattice(out_ / cfg_.lattice_dir);
      return;
    case Stage::TestSet: return load_testset();
    case Stage::Infer: return load_infer();
    case Stage::Eval: return;
  }
}

// ---- population ----------------------------------------------------------

void Runner::do_population() {
  PopulationSpec spec;
  spec.grid = cfg_.grid;
  spec.healthy = cfg_.healthy;
  spec.per_pathology = cfg_.per_pathology;
  spec.pathologies = cfg_.pathologies;
  spec.seed = derive_seed(cfg_.seed, "population");
  population_ = generate_population(spec);
  const fs::path dir = out_ / "population";
  Json list = Json::array();
  for (const auto& p : population_) {
    const auto files = subject_files(dir, p.subject.id);
    store_subject(files, p.subject);
    list.push_back({{"id", p.subject.id},
                    {"pathology", to_string(p.subject.pathology)},
                    {"severity", p.severity},
                    {"ed_latent", to_json(p.ed)},
                    {"es_latent", to_json(p.es)},
                    {"files", to_json(files, dir)}});
  }
  write_json(dir / "manifest.json", {{"subjects", list}});
}

void Runner::load_population() {
  const fs::path dir = out_ / "population";
  const Json j = read_json(dir / "manifest.json");
  population_.clear();
  for (const auto& s : j.at("subjects")) {
    PhantomSubject p;
    const auto pathology = parse_pathology(s.at("pathology").get<std::string>());
    p.subject = load_subject(subject_files_from_json(s.at("files"), dir), s.at("id").get<std::string>(), pathology);
    p.severity = s.at("severity").get<double>();
    p.ed = latent_from_json(s.at("ed_latent"));
    p.es = latent_from_json(s.at("es_latent"));
    population_.push_back(std::move(p));
  }
}

const PhantomSubject& Runner::population_subject(const std::string& id) const {
  for (const auto& p : population_)
    if (p.subject.id == id) return p;
  fail(ErrorCode::InvalidArgument, fmt::format("subject {} is not in the population", id));
}

// ---- severity / anchors --------------------------------------------------

void Runner::do_severity() {
  need(Stage::Population);
  std::vector<Subject> subjects;
  for (const auto& p : population_) subjects.push_back(p.subject);
  severity_ = compute_severity(subjects, cfg_.pathologies, opt_.jobs);
  write_json(out_ / "severity" / "biomarkers.json", to_json(severity_, subjects));
  for (const auto& [p, st] : severity_.stats)
    write_json(out_ / "severity" / fmt::format("stats_{}.json", to_string(p)), to_json(st));
}

void Runner::load_severity() {
  const Json j = read_json(out_ / "severity" / "biomarkers.json");
  severity_ = {};
  for (const auto& s : j.at("subjects")) {
    auto& row = severity_.biomarkers[s.at("id").get<std::string>()];
    for (const auto& [k, v] : s.at("biomarkers").items()) row[parse_pathology(k)] = v.get<double>();
  }
  for (auto p : cfg_.pathologies)
    severity_.stats[p] = stats_from_json(read_json(out_ / "severity" / fmt::format("stats_{}.json", to_string(p))));
}

void Runner::do_anchors() {
  need(Stage::Population);
  need(Stage::Severity);
  std::vector<SubjectRecord> records;
  for (const auto& p : population_)
    records.push_back({p.subject.id, p.subject.pathology, severity_.biomarkers.at(p.subject.id)});
  anchors_ = select_anchors(records, severity_.stats, cfg_.regime);
  write_json(out_ / "anchors" / "anchors.json", to_json(anchors_));
}

std::map<std::string, Subject> Runner::anchor_subjects() {
  need(Stage::Population);
  need(Stage::Anchors);
  std::map<std::string, Subject> out;
  for (const auto& id : anchors_.subject_ids()) out[id] = population_subject(id).subject;
  return out;
}

// ---- synthesis -----------------------------------------------------------

void Runner::do_synthesis() {
  need(Stage::Severity);
  const auto subjects = anchor_subjects();
  SynthesisSpec spec;
  spec.N = cfg_.N;
  spec.J = cfg_.J;
  spec.grid = cfg_.grid;
  spec.seed = derive_seed(cfg_.seed, "synthesis");
  spec.jobs = opt_.jobs;
  cohorts_.clear();
  Json anchoring = Json::array();
  for (auto p : cfg_.pathologies) {
    auto cohort = synthesize_cohort(anchors_, p, subjects, severity_.stats.at(p), spec);
    save_cohort(out_ / cfg_.cohort_dir / std::string(to_string(p)), cohort);
    // Decoded segment endpoints against the anchors they interpolate.
    for (const auto& rec : cohort.segments) {
      const auto seg = segment_of(cohort, rec);
      Json ends = Json::object();
      for (const auto& [omega, id] : {std::pair{0.0, rec.source_id}, std::pair{1.0, rec.target_id}}) {
        const Subject dec = decode_segment(seg, omega, cfg_.grid);
        const Subject& anchor = subjects.at(id);
        Json per = Json::object();
        for (const auto& [ph, a, b] : {std::tuple{"ED", &dec.ed.mask, &anchor.ed.mask},
                                       std::tuple{"ES", &dec.es.mask, &anchor.es.mask}}) {
          Json d = Json::object();
          for (auto c : kForegroundLabels) d[std::string(to_string(c))] = dice3d(*a, *b, c);
          per[ph] = d;
        }
        ends[omega == 0.0 ? "source" : "target"] = {{"id", id}, {"dice", per}};
      }
      anchoring.push_back({{"pathology", to_string(p)}, {"segment", rec.index}, {"endpoints", ends}});
    }
    cohorts_.push_back(std::move(cohort));
  }
  write_json(out_ / cfg_.cohort_dir / "anchoring.json", {{"segments", anchoring}});
}

void Runner::load_synthesis() {
  cohorts_.clear();
  for (auto p : cfg_.pathologies) cohorts_.push_back(load_cohort(out_ / cfg_.cohort_dir / std::string(to_string(p))));
}

// ---- SIV / lattice -------------------------------------------------------

void Runner::do_siv() {
  need(Stage::Synthesis);
  need(Stage::Anchors);
  const auto entries = cohort_entries(merge_cohorts(cohorts_));
  std::vector<double> D = cfg_.D;
  std::vector<int> Q = cfg_.Q;
  std::sort(D.begin(), D.end());
  D.erase(std::unique(D.begin(), D.end()), D.end());
  std::sort(Q.begin(), Q.end());
  Q.erase(std::unique(Q.begin(), Q.end()), Q.end());
  plans_.clear();
  Json list = Json::array();
  for (double d : D)
    for (int q : Q) {
      auto plan = partition(entries, anchors_, d, q);
      const auto violations = verify_plan(plan, anchors_);
      require(violations.empty(), ErrorCode::InvariantViolation,
              violations.empty() ? "" : violations.front().detail);
      list.push_back(to_json(plan));
      plans_[{d, q}] = std::move(plan);
    }
  write_json(out_ / "siv" / "plans.json", {{"plans", list}});
}

void Runner::load_siv() {
  plans_.clear();
  const Json doc = read_json(out_ / "siv" / "plans.json");
  for (const auto& j : doc.at("plans")) {
    auto plan = plan_from_json(j);
    plans_[{plan.delta_gamma, plan.alpha}] = std::move(plan);
  }
}

void Runner::do_lattice() {
  need(Stage::Siv);
  need(Stage::Synthesis);
  const auto specs = build_lattice(cfg_.D, cfg_.Q);
  auto bank = std::make_shared<SampleBank>();
  SampleFileMap files;
  const fs::path ldir = out_ / cfg_.lattice_dir;
  auto add = [&](const Subject& s, const SubjectFiles& f) {
    bank->add_subject(s);
    files[s.id + "_ED"] = {f.ed_image, f.ed_mask};
    files[s.id + "_ES"] = {f.es_image, f.es_mask};
  };
  for (const auto& [id, s] : anchor_subjects()) add(s, subject_files(out_ / "population", id));
  for (const auto* vp : merge_cohorts(cohorts_)) {
    add(vp->as_subject(),
        subject_files(out_ / cfg_.cohort_dir / std::string(to_string(vp->pathology)), vp->id));
  }
  bank->compute_pairwise(opt_.jobs);
  lattice_ = train_lattice(cfg_.D, cfg_.Q, plans_, bank, opt_.jobs);
  require(lattice_.cells.size() == specs.size(), ErrorCode::InvariantViolation, "lattice size mismatch");
  save_lattice(ldir, lattice_, files);
}

// ---- held-out test set ---------------------------------------------------

void Runner::do_testset() {
  need(Stage::Population);
  need(Stage::Anchors);
  const std::uint64_t base = derive_seed(cfg_.seed, "testset");
  tests_.clear();
  for (auto p : cfg_.pathologies) {
    const auto roles = anchors_.trajectory(p);
    const int K = static_cast<int>(roles.size()) - 1;
    require(K >= 1, ErrorCode::InvalidArgument, fmt::format("{} has no trajectory segment", to_string(p)));
    for (int i = 0; i < cfg_.test_cases_per_pathology; ++i) {
      TestCase tc;
      tc.id = fmt::format("T-{}-{:02d}", to_string(p), i + 1);
      tc.pathology = p;
      tc.segment = i % K;
      const std::uint64_t seed = derive_seed(base, tc.id);
      Rng rng(seed);
      tc.u = 0.1 + 0.8 * rng.uniform();
      const auto& src = population_subject(roles[tc.segment].subject_id);
      const auto& tgt = population_subject(roles[tc.segment + 1].subject_id);
      tc.subject.id = tc.id;
      tc.subject.pathology = p;
      tc.subject.ed = decode(slerp(src.ed, tgt.ed, tc.u), cfg_.grid, derive_seed(seed, "ed"));
      tc.subject.es = decode(slerp(src.es, tgt.es, tc.u), cfg_.grid, derive_seed(seed, "es"));
      tests_.push_back(std::move(tc));
    }
  }
  const fs::path dir = out_ / "testset";
  Json list = Json::array();
  for (const auto& tc : tests_) {
    const auto files = subject_files(dir, tc.id);
    store_subject(files, tc.subject);
    list.push_back({{"id", tc.id},
                    {"pathology", to_string(tc.pathology)},
                    {"segment", tc.segment},
                    {"u", tc.u},
                    {"files", to_json(files, dir)}});
  }
  write_json(dir / "manifest.json", {{"cases", list}});
}

void Runner::load_testset() {
  const fs::path dir = out_ / "testset";
  tests_.clear();
  const Json manifest = read_json(dir / "manifest.json");
  for (const auto& c : manifest.at("cases")) {
    TestCase tc;
    tc.id = c.at("id").get<std::string>();
    tc.pathology = parse_pathology(c.at("pathology").get<std::string>());
    tc.segment = c.at("segment").get<int>();
    tc.u = c.at("u").get<double>();
    tc.subject = load_subject(subject_files_from_json(c.at("files"), dir), tc.id, tc.pathology);
    tests_.push_back(std::move(tc));
  }
}

// ---- inference / evaluation ----------------------------------------------

void Runner::do_infer() {
  need(Stage::Lattice);
  need(Stage::TestSet);
  infer_ = {};
  infer_.cell_dice.assign(lattice_.cells.size(), {});
  const fs::path dir = out_ / "inference";
  for (const auto& tc : tests_) {
    for (const auto& [phase, ph] : {std::pair{"ED", &tc.subject.ed}, std::pair{"ES", &tc.subject.es}}) {
      const std::string id = fmt::format("{}_{}", tc.id, phase);
      const auto res = activate(lattice_, ph->image, id, opt_.jobs, [&](std::size_t i, const ProbabilityMap& pm) {
        infer_.cell_dice[i].push_back(foreground_dice(argmax_labels(pm), ph->mask));
      });
      const fs::path mask_path = dir / id / "mask.plv";
      store_volume(mask_path, res.mask);
      write_json(dir / id / "activation.json", to_json(res, mask_path.lexically_relative(out_).generic_string()));
      infer_.image_ids.push_back(id);
      infer_.masks.push_back(res.mask);
      infer_.truths.push_back(ph->mask);
    }
  }
  Json cells = Json::array();
  for (std::size_t i = 0; i < lattice_.cells.size(); ++i) {
    Json c = cell_json(lattice_.cells[i].spec);
    c["dice"] = infer_.cell_dice[i];
    cells.push_back(c);
  }
  write_json(dir / "cells.json", {{"images", infer_.image_ids}, {"cells", cells}});
}

void Runner::load_infer() {
  need(Stage::TestSet);
  const fs::path dir = out_ / "inference";
  const Json j = read_json(dir / "cells.json");
  infer_ = {};
  infer_.image_ids = j.at("images").get<std::vector<std::string>>();
  for (const auto& c : j.at("cells")) infer_.cell_dice.push_back(c.at("dice").get<std::vector<double>>());
  for (const auto& tc : tests_) {
    for (const auto& [phase, ph] : {std::pair{"ED", &tc.subject.ed}, std::pair{"ES", &tc.subject.es}}) {
      infer_.masks.push_back(load_mask(dir / fmt::format("{}_{}", tc.id, phase) / "mask.plv"));
      infer_.truths.push_back(ph->mask);
    }
  }
  require(infer_.masks.size() == infer_.image_ids.size(), ErrorCode::InvariantViolation,
          "inference outputs do not match the test set");
}

void Runner::do_eval() {
  need(Stage::Infer);
  need(Stage::Synthesis);
  const fs::path dir = out_ / cfg_.reports_dir;
  std::vector<MetricReport> cases;
  for (std::size_t i = 0; i < infer_.masks.size(); ++i)
    cases.push_back(evaluate_masks(infer_.masks[i], infer_.truths[i], infer_.image_ids[i]));
  const MetricReport mean = mean_report(cases);

  std::vector<std::pair<ExpertSpec, double>> cells;
  Json cell_list = Json::array();
  need(Stage::Siv);
  std::vector<ExpertSpec> specs;
  for (const auto& [spec, _] : plans_) specs.push_back(spec);
  require(specs.size() == infer_.cell_dice.size(), ErrorCode::InvariantViolation,
          "per-cell scores do not match the lattice");
  std::vector<double> cell_means;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& d = infer_.cell_dice[i];
    double m = 0.0;
    for (double x : d) m += x;
    m /= static_cast<double>(std::max<std::size_t>(1, d.size()));
    cell_means.push_back(m);
    Json c = cell_json(specs[i]);
    c["mean_dice"] = m;
    cell_list.push_back(c);
  }
  std::vector<double> sorted = cell_means;
  std::sort(sorted.begin(), sorted.end());
  const double median = percentile_of_sorted(sorted, 50.0);

  Json j = {{"cases", Json::array()},
            {"mean", to_json(mean)},
            {"activation_mean_dice", mean.dice_avg},
            {"cells", cell_list},
            {"worst_cell_dice", sorted.front()},
            {"median_cell_dice", median},
            {"best_cell_dice", sorted.back()}};
  for (const auto& c : cases) j["cases"].push_back(to_json(c));
  write_json(dir / "metrics.json", j);
  std::vector<MetricReport> rows = cases;
  rows.push_back(mean);
  write_text(dir / "metrics.txt", format_table(rows));

  // Loss components of the decoded segment targets against their anchors
  // (no registration field, so the smoothness term is zero).
  need(Stage::Population);
  Json losses = Json::array();
  for (const auto& cohort : cohorts_) {
    for (const auto& rec : cohort.segments) {
      const Subject dec = decode_segment(segment_of(cohort, rec), 1.0, cfg_.grid);
      const Subject& tgt = population_subject(rec.target_id).subject;
      for (const auto& [phase, a, b] : {std::tuple{"ED", &dec.ed, &tgt.ed}, std::tuple{"ES", &dec.es, &tgt.es}}) {
        DeformationField phi{cfg_.grid, std::vector<std::array<double, 3>>(cfg_.grid.voxel_count(), {0, 0, 0})};
        const auto comp = loss_components(a->image, b->image, a->mask, b->mask, phi);
        const auto tot = composite_losses(comp, cfg_.loss_weights);
        MetricReport r = evaluate_masks(a->mask, b->mask,
                                        fmt::format("{}-s{}-{}", to_string(cohort.pathology), rec.index, phase));
        r.losses = comp;
        r.composites = tot;
        losses.push_back(to_json(r));
      }
    }
  }
  write_json(dir / "losses.json", {{"segments", losses}});
}

}  // namespace

PipelineConfig config_from_json(const Json& j) {
  check_keys(j, "config", {"paths", "regime", "pathologies", "D", "Q", "N", "J", "grid", "seed",
                           "population", "test", "preprocess", "loss_weights"});
  PipelineConfig c;
  if (j.contains("paths")) {
    const Json& p = j["paths"];
    check_keys(p, "paths", {"cohort_dir", "lattice_dir", "reports_dir"});
    read(p, "cohort_dir", c.cohort_dir);
    read(p, "lattice_dir", c.lattice_dir);
    read(p, "reports_dir", c.reports_dir);
  }
  try {
    if (j.contains("regime")) c.regime = parse_regime(j["regime"].get<std::string>());
    if (j.contains("pathologies")) {
      c.pathologies.clear();
      for (const auto& p : j["pathologies"]) c.pathologies.push_back(parse_pathology(p.get<std::string>()));
    }
  } catch (const Error& e) {
    config_fail(e.detail());
  } catch (const Json::exception& e) {
    config_fail(e.what());
  }
  read(j, "D", c.D);
  read(j, "Q", c.Q);
  read(j, "N", c.N);
  read(j, "J", c.J);
  read(j, "seed", c.seed);
  if (j.contains("grid")) {
    const Json& g = j["grid"];
    check_keys(g, "grid", {"dims", "spacing_mm"});
    std::array<int, 3> dims{c.grid.dims.nx, c.grid.dims.ny, c.grid.dims.nz};
    std::array<double, 3> sp{c.grid.spacing.sx, c.grid.spacing.sy, c.grid.spacing.sz};
    read(g, "dims", dims);
    read(g, "spacing_mm", sp);
    c.grid = {{dims[0], dims[1], dims[2]}, {sp[0], sp[1], sp[2]}};
  }
  if (j.contains("population")) {
    check_keys(j["population"], "population", {"healthy", "per_pathology"});
    read(j["population"], "healthy", c.healthy);
    read(j["population"], "per_pathology", c.per_pathology);
  }
  if (j.contains("test")) {
    check_keys(j["test"], "test", {"cases_per_pathology"});
    read(j["test"], "cases_per_pathology", c.test_cases_per_pathology);
  }
  if (j.contains("preprocess")) {
    const Json& p = j["preprocess"];
    check_keys(p, "preprocess", {"enabled", "inplane_spacing_mm", "margin", "output_dims"});
    read(p, "enabled", c.preprocess_enabled);
    read(p, "inplane_spacing_mm", c.preprocess.inplane_spacing_mm);
    read(p, "margin", c.preprocess.margin);
    std::array<int, 3> od{c.preprocess.output_dims.nx, c.preprocess.output_dims.ny, c.preprocess.output_dims.nz};
    read(p, "output_dims", od);
    c.preprocess.output_dims = {od[0], od[1], od[2]};
    if (!(c.preprocess.inplane_spacing_mm > 0) || !(c.preprocess.margin >= 0) || od[0] < 1 || od[1] < 1 || od[2] < 1)
      config_fail("invalid preprocess settings");
  }
  if (j.contains("loss_weights")) {
    const Json& w = j["loss_weights"];
    check_keys(w, "loss_weights", {"align", "fid", "mask", "corr", "sm", "img_ssim", "lpips"});
    read(w, "align", c.loss_weights.align);
    read(w, "fid", c.loss_weights.fid);
    read(w, "mask", c.loss_weights.mask);
    read(w, "corr", c.loss_weights.corr);
    read(w, "sm", c.loss_weights.sm);
    read(w, "img_ssim", c.loss_weights.img_ssim);
    read(w, "lpips", c.loss_weights.lpips);
  }
  validate(c);
  return c;
}

Json to_json(const PipelineConfig& c) {
  std::vector<std::string> paths;
  for (auto p : c.pathologies) paths.emplace_back(to_string(p));
  const auto& w = c.loss_weights;
  return {
      {"paths", {{"cohort_dir", c.cohort_dir}, {"lattice_dir", c.lattice_dir}, {"reports_dir", c.reports_dir}}},
      {"regime", to_string(c.regime)},
      {"pathologies", paths},
      {"D", c.D},
      {"Q", c.Q},
      {"N", c.N},
      {"J", c.J},
      {"grid",
       {{"dims", {c.grid.dims.nx, c.grid.dims.ny, c.grid.dims.nz}},
        {"spacing_mm", {c.grid.spacing.sx, c.grid.spacing.sy, c.grid.spacing.sz}}}},
      {"seed", c.seed},
      {"population", {{"healthy", c.healthy}, {"per_pathology", c.per_pathology}}},
      {"test", {{"cases_per_pathology", c.test_cases_per_pathology}}},
      {"preprocess",
       {{"enabled", c.preprocess_enabled},
        {"inplane_spacing_mm", c.preprocess.inplane_spacing_mm},
        {"margin", c.preprocess.margin},
        {"output_dims", {c.preprocess.output_dims.nx, c.preprocess.output_dims.ny, c.preprocess.output_dims.nz}}}},
      {"loss_weights",
       {{"align", w.align}, {"fid", w.fid}, {"mask", w.mask}, {"corr", w.corr}, {"sm", w.sm},
        {"img_ssim", w.img_ssim}, {"lpips", w.lpips}}},
  };
}

PipelineConfig load_config(const fs::path& path) {
  Json j;
  try {
    j = read_json(path);
  } catch (const Error& e) {
    config_fail(e.detail());
  }
  return config_from_json(j);
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Population: return "population";
    case Stage::Severity: return "severity";
    case Stage::Anchors: return "anchors";
    case Stage::Synthesis: return "synthesis";
    case Stage::Siv: return "siv";
    case Stage::Lattice: return "lattice";
    case Stage::TestSet: return "testset";
    case Stage::Infer: return "infer";
    case Stage::Eval: return "eval";
  }
  return "?";
}

RunReport run_pipeline(const PipelineConfig& config, const RunOptions& options) {
  validate(config);
  return Runner(config, options).run();
}

SeverityTable compute_severity(const std::vector<Subject>& subjects,
                               const std::vector<Pathology>& pathologies, unsigned jobs) {
  require(!subjects.empty(), ErrorCode::EmptyInput, "no subjects");
  std::vector<std::map<Pathology, double>> rows(subjects.size());
  parallel_for(subjects.size(), jobs, [&](std::size_t i) {
    for (auto p : pathologies) rows[i][p] = biomarker(subjects[i], p);
  });
  SeverityTable t;
  for (std::size_t i = 0; i < subjects.size(); ++i) t.biomarkers[subjects[i].id] = rows[i];
  for (auto p : pathologies) {
    std::vector<double> values;
    for (std::size_t i = 0; i < subjects.size(); ++i)
      if (subjects[i].pathology == Pathology::Healthy || subjects[i].pathology == p) values.push_back(rows[i][p]);
    t.stats[p] = fit_normalization(values, p);
  }
  return t;
}

Json to_json(const SeverityTable& table, const std::vector<Subject>& subjects) {
  Json list = Json::array();
  for (const auto& s : subjects) {
    Json b = Json::object(), g = Json::object();
    for (const auto& [p, v] : table.biomarkers.at(s.id)) {
      b[std::string(to_string(p))] = v;
      if (table.stats.count(p)) g[std::string(to_string(p))] = normalize_to_gamma(v, table.stats.at(p)).gamma();
    }
    list.push_back({{"id", s.id}, {"pathology", to_string(s.pathology)}, {"biomarkers", b}, {"gamma", g}});
  }
  return {{"subjects", list}};
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::EmptySet:
    case ErrorCode::NTooSmall:
    case ErrorCode::StepTooCoarse:
      return 2;
    case ErrorCode::InvariantViolation:
      return 4;
    default:
      return 3;
  }
}

}  // namespace pathco
