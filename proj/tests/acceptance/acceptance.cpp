// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. End-to-end criteria drive the command
// line tool named by the PATHCO_CLI environment variable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <sys/wait.h>

#include "oracles.hpp"
#include "pathco/activation.hpp"
#include "pathco/anchors.hpp"
#include "pathco/lattice.hpp"
#include "pathco/metrics.hpp"
#include "pathco/phantom.hpp"
#include "pathco/pipeline.hpp"
#include "pathco/serialize.hpp"
#include "pathco/severity.hpp"
#include "pathco/siv.hpp"
#include "pathco/trajectory.hpp"

using namespace pathco;
namespace fs = std::filesystem;

namespace {

// ---- pinned tolerances and budgets ---------------------------------------

constexpr std::size_t kExpectedCells = 100;
constexpr double kTopologyBudgetS = 1.0;
constexpr double kTrainBudgetS = 300.0;
constexpr double kSivBudgetS = 1.0;
constexpr double kInverseTol = 1e-3;
constexpr double kSpacingTol = 0.05;
constexpr double kEndpointDice = 0.95;
constexpr double kHd95Tol = 1e-9;
constexpr double kDiceTol = 1e-12;
constexpr double kSmoothnessTol = 1e-9;
constexpr double kProxyTol = 1e-6;
constexpr double kEndToEndDice = 0.85;
constexpr double kEndToEndBudgetS = 600.0;
constexpr int kOraclePairs = 200;

const std::vector<double> kD{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
const std::vector<int> kQ{2, 4, 6, 8, 10};
const std::vector<Pathology> kDiseases{Pathology::DCM, Pathology::HCM, Pathology::MINF, Pathology::ARV};

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  fmt::print("{} {}. {}: {}\n", pass ? "PASS" : "FAIL", id, name, detail);
  std::fflush(stdout);
}

// Runs a criterion; an escaping exception fails it.
void criterion(int id, const char* name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [pass, detail] = body();
    report(id, name, pass, detail);
  } catch (const std::exception& e) {
    report(id, name, false, fmt::format("exception: {}", e.what()));
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct CliRun {
  int code = -1;
  double seconds = 0.0;
};

CliRun cli(const std::string& args) {
  const char* exe = std::getenv("PATHCO_CLI");
  if (exe == nullptr) throw std::runtime_error("PATHCO_CLI is not set");
  const auto t0 = std::chrono::steady_clock::now();
  const int status = std::system(fmt::format("{} {} >/dev/null 2>&1", exe, args).c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, seconds_since(t0)};
}

std::map<std::string, std::string> tree_hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = sha256_file(e.path());
  return out;
}

std::vector<VirtualCohort> load_cohorts(const fs::path& run) {
  std::vector<VirtualCohort> out;
  for (auto p : kDiseases) out.push_back(load_cohort(run / "cohort" / std::string(to_string(p))));
  return out;
}

// ---- random volumes ------------------------------------------------------

LabelMask random_mask(const Geometry& g, std::mt19937_64& rng, double p_fg) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(1, 3);
  std::vector<std::uint8_t> l(g.voxel_count());
  for (auto& v : l) v = static_cast<std::uint8_t>(u(rng) < p_fg ? cls(rng) : 0);
  return LabelMask(g, std::move(l));
}

Geometry random_small_geometry(std::mt19937_64& rng) {
  static constexpr double kSpacings[] = {0.5, 0.75, 1.0, 1.25, 1.5, 2.5};
  std::uniform_int_distribution<int> dim(1, 8);
  std::uniform_int_distribution<int> sp(0, 5);
  return {{dim(rng), dim(rng), dim(rng)}, {kSpacings[sp(rng)], kSpacings[sp(rng)], kSpacings[sp(rng)]}};
}

using Probs = std::array<float, kNumClasses>;

ProbabilityMap map_of(const Geometry& g, const std::vector<Probs>& voxels) {
  const std::size_t n = voxels.size();
  std::vector<float> p(kNumClasses * n);
  for (std::size_t v = 0; v < n; ++v)
    for (int c = 0; c < kNumClasses; ++c) p[c * n + v] = voxels[v][c];
  return ProbabilityMap(g, std::move(p));
}

// Per voxel: class c from the map chosen for c, background the mean over
// the distinct chosen maps, first maximum wins.
LabelMask fuse_oracle(const std::vector<ProbabilityMap>& maps, const std::array<int, 3>& sel) {
  const Geometry& g = maps[sel[0]].geometry();
  std::set<int> distinct(sel.begin(), sel.end());
  std::vector<std::uint8_t> out(g.voxel_count());
  for (std::size_t v = 0; v < out.size(); ++v) {
    std::array<double, kNumClasses> score{};
    for (int m : distinct) score[0] += maps[m].prob(0, v);
    score[0] /= static_cast<double>(distinct.size());
    for (int c = 1; c < kNumClasses; ++c) score[c] = maps[sel[c - 1]].prob(c, v);
    out[v] = static_cast<std::uint8_t>(std::max_element(score.begin(), score.end()) - score.begin());
  }
  return LabelMask(g, std::move(out));
}

// ---- anchor collision fixture --------------------------------------------

// Five healthy and twenty subjects per disease; the DCM and HCM healthy
// values coincide so one healthy subject is the baseline of both.
std::pair<std::vector<SubjectRecord>, std::map<Pathology, NormalizationStats>> collision_cohort() {
  std::map<Pathology, std::vector<double>> healthy{
      {Pathology::DCM, {0.10, 0.11, 0.12, 0.13, 0.14}},
      {Pathology::HCM, {0.10, 0.11, 0.12, 0.13, 0.14}},
      {Pathology::MINF, {0.60, 0.61, 0.63, 0.62, 0.64}},
      {Pathology::ARV, {0.12, 0.13, 0.10, 0.11, 0.14}},
  };
  std::vector<SubjectRecord> cohort;
  std::map<Pathology, NormalizationStats> stats;
  for (int h = 0; h < 5; ++h) {
    SubjectRecord r{fmt::format("H{}", h + 1), Pathology::Healthy, {}};
    for (auto p : kDiseases) r.biomarkers[p] = healthy[p][h];
    cohort.push_back(r);
  }
  for (auto p : kDiseases) {
    std::vector<double> pooled = healthy[p];
    for (int i = 0; i < 20; ++i) {
      const double b = p == Pathology::MINF ? 0.10 + 0.01 * i : 0.50 + 0.02 * i;
      cohort.push_back({fmt::format("{}{:02d}", to_string(p), i), p, {{p, b}}});
      pooled.push_back(b);
    }
    stats[p] = fit_normalization(pooled, p);
  }
  return {cohort, stats};
}

// ---- SIV property check independent of verify_plan -----------------------

std::string siv_violation(const SIVPlan& plan, const std::set<std::string>& anchor_ids) {
  const std::set<std::string> train(plan.train_ids.begin(), plan.train_ids.end());
  for (const auto& id : plan.val_ids) {
    if (anchor_ids.count(id)) return fmt::format("anchor {} in validation", id);
    if (train.count(id)) return fmt::format("{} in train and validation", id);
  }
  for (const auto& id : anchor_ids)
    if (!train.count(id)) return fmt::format("anchor {} missing from training", id);
  const int period = plan.alpha + 1;
  const int n = static_cast<int>(plan.sequence.size());
  std::size_t val_seen = 0;
  for (int k = 0; k < n; ++k) {
    if (k % period != 0) continue;
    ++val_seen;
    for (int j = std::max(0, k - plan.alpha); j < k; ++j)
      if (plan.sequence[j].gamma > plan.sequence[k].gamma)
        return fmt::format("validation {} below training {}", plan.sequence[k].id, plan.sequence[j].id);
  }
  if (val_seen != plan.val_ids.size()) return "validation size mismatch";
  return {};
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "pathco_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  const fs::path run_a = work / "a", run_b = work / "b", run_c = work / "c";

  // Stepwise run for stage timings, then two identical full runs.
  CliRun siv_a, train_a, full_a, full_b, full_c;
  std::string cli_error;
  try {
    siv_a = cli(fmt::format("siv --out {}", run_a.string()));
    train_a = cli(fmt::format("train --out {}", run_a.string()));
    full_a = cli(fmt::format("run --out {}", run_a.string()));
    full_b = cli(fmt::format("run --out {}", run_b.string()));
    full_c = cli(fmt::format("run --out {}", run_c.string()));
  } catch (const std::exception& e) {
    cli_error = e.what();
  }
  auto require_runs = [&] {
    if (!cli_error.empty()) throw std::runtime_error(cli_error);
    for (const auto* r : {&siv_a, &train_a, &full_a, &full_b, &full_c})
      if (r->code != 0) throw std::runtime_error(fmt::format("pipeline exited with code {}", r->code));
  };

  criterion(1, "Lattice topology", [&] {
    require_runs();
    const auto t0 = std::chrono::steady_clock::now();
    const auto specs = build_lattice(kD, kQ);
    const double topo_s = seconds_since(t0);
    const Json lat = read_json(run_a / "lattice" / "lattice.json");
    bool persisted = lat.at("cells").size() == specs.size();
    for (std::size_t i = 0; persisted && i < specs.size(); ++i) {
      const auto& c = lat["cells"][i];
      persisted = c.at("delta_gamma").get<double>() == specs[i].delta_gamma && c.at("alpha").get<int>() == specs[i].alpha;
    }
    std::set<ExpertSpec> unique(specs.begin(), specs.end());
    const bool count_ok = specs.size() == kExpectedCells;
    const bool pass = count_ok && persisted && unique.size() == specs.size() && topo_s < kTopologyBudgetS &&
                      train_a.seconds < kTrainBudgetS;
    return std::pair{pass, fmt::format("{} cells created and {} persisted for |D|={} x |Q|={} (expected {}); "
                                       "topology {:.2e} s (< {} s); training all cells {:.1f} s (< {} s)",
                                       specs.size(), lat["cells"].size(), kD.size(), kQ.size(), kExpectedCells,
                                       topo_s, kTopologyBudgetS, train_a.seconds, kTrainBudgetS)};
  });

  criterion(2, "Anchor regimes", [&] {
    PopulationSpec spec;  // 20 healthy + 4 x 20 diseased, 64^3 grid
    const auto population = generate_population(spec);
    std::vector<Subject> subjects;
    for (const auto& p : population) subjects.push_back(p.subject);
    const auto table = compute_severity(subjects, kDiseases);
    std::vector<SubjectRecord> records;
    for (const auto& s : subjects) records.push_back({s.id, s.pathology, table.biomarkers.at(s.id)});
    const auto a7 = select_anchors(records, table.stats, Regime::A7);
    const auto a11 = select_anchors(records, table.stats, Regime::A11);
    const auto a19 = select_anchors(records, table.stats, Regime::A19);
    auto ids = [](const AnchorSet& a) {
      const auto v = a.subject_ids();
      return std::set<std::string>(v.begin(), v.end());
    };
    const auto s7 = ids(a7), s11 = ids(a11), s19 = ids(a19);
    const bool nested = std::includes(s11.begin(), s11.end(), s7.begin(), s7.end()) &&
                        std::includes(s19.begin(), s19.end(), s11.begin(), s11.end());
    const bool increments = a11.roles.size() == a7.roles.size() + 4 && a19.roles.size() == a11.roles.size() + 8;
    const auto [cc, cs] = collision_cohort();
    const auto c7 = select_anchors(cc, cs, Regime::A7);
    const bool pass = subjects.size() == 100 && s7.size() <= 8 && nested && increments && c7.size() == 7;
    return std::pair{pass, fmt::format("{} subjects; |A7|={} |A11|={} |A19|={}; roles {} -> {} -> {}; nested={}; "
                                       "collision case |A7|={} from {} roles",
                                       subjects.size(), s7.size(), s11.size(), s19.size(), a7.roles.size(),
                                       a11.roles.size(), a19.roles.size(), nested, c7.size(), c7.roles.size())};
  });

  criterion(3, "SIV correctness", [&] {
    require_runs();
    const auto cohorts = load_cohorts(run_a);
    const auto entries = cohort_entries(merge_cohorts(cohorts));
    const auto anchors = anchors_from_json(read_json(run_a / "anchors" / "anchors.json"));
    const auto aid = anchors.subject_ids();
    const std::set<std::string> anchor_ids(aid.begin(), aid.end());
    std::string first_bad;
    int plans = 0;
    const auto t0 = std::chrono::steady_clock::now();
    // every delta_gamma of D against alpha 1..10, which includes all of Q
    for (double d : kD)
      for (int alpha = 1; alpha <= 10; ++alpha) {
        const auto plan = partition(entries, anchors, d, alpha);
        ++plans;
        auto bad = siv_violation(plan, anchor_ids);
        if (bad.empty() && !verify_plan(plan, anchors).empty()) bad = verify_plan(plan, anchors).front().detail;
        if (!bad.empty() && first_bad.empty()) first_bad = fmt::format("(dg={}, alpha={}): {}", d, alpha, bad);
      }
    const double secs = seconds_since(t0);
    int persisted = 0;
    const Json stored = read_json(run_a / "siv" / "plans.json");
    for (const auto& j : stored.at("plans")) {
      const auto bad = siv_violation(plan_from_json(j), anchor_ids);
      if (!bad.empty() && first_bad.empty()) first_bad = "persisted plan: " + bad;
      ++persisted;
    }
    const bool pass = plans == 100 && persisted == static_cast<int>(kD.size() * kQ.size()) && first_bad.empty() &&
                      secs < kSivBudgetS;
    return std::pair{pass, fmt::format("{} plans over {} cohort entries verified in {:.3f} s (< {} s), "
                                       "plus {} persisted lattice plans; {}",
                                       plans, entries.size(), secs, kSivBudgetS, persisted,
                                       first_bad.empty() ? "no violations" : first_bad)};
  });

  criterion(4, "Clinically guided resampling", [&] {
    require_runs();
    double inv_err = 0.0;
    for (const auto& [N, J] : std::vector<std::pair<int, int>>{{32, 50}, {32, 200}, {64, 200}}) {
      std::vector<double> w(J + 1), g(J + 1);
      for (int j = 0; j <= J; ++j) {
        w[j] = static_cast<double>(j) / J;
        g[j] = w[j] * w[j];
      }
      const auto star = resample_weights(make_mapping(w, g), N);
      for (int t = 0; t < N; ++t) inv_err = std::max(inv_err, std::abs(star[t] - std::sqrt(t / (N - 1.0))));
    }
    const auto cohorts = load_cohorts(run_a);
    const PipelineConfig cfg;
    double resampled_dev = 0.0, raw_dev = 0.0;
    std::size_t patients = 0;
    for (const auto& cohort : cohorts) {
      const auto stats =
          stats_from_json(read_json(run_a / "severity" / fmt::format("stats_{}.json", to_string(cohort.pathology))));
      for (const auto& vp : cohort.patients) {
        resampled_dev = std::max(resampled_dev, std::abs(vp.achieved_gamma - vp.gamma));
        ++patients;
      }
      for (const auto& rec : cohort.segments) {
        const auto seg = segment_of(cohort, rec);
        const double lo = rec.mapping.gamma.front(), hi = rec.mapping.gamma.back();
        for (int t = 1; t <= cfg.N - 2; ++t) {
          const double omega = static_cast<double>(t) / (cfg.N - 1);
          const double g = severity_gamma(decode_segment(seg, omega, cfg.grid), stats);
          raw_dev = std::max(raw_dev, std::abs(g - (lo + (hi - lo) * omega)));
        }
      }
    }
    const bool pass = inv_err <= kInverseTol && resampled_dev <= kSpacingTol && resampled_dev < raw_dev;
    return std::pair{pass, fmt::format("omega^2 inverse max error {:.2e} (<= {}); {} phantom states: resampled max "
                                       "deviation {:.4f} (<= {}) vs equal-omega {:.4f}",
                                       inv_err, kInverseTol, patients, resampled_dev, kSpacingTol, raw_dev)};
  });

  criterion(5, "Anchoring contract", [&] {
    require_runs();
    const auto cohorts = load_cohorts(run_a);
    const PipelineConfig cfg;
    double worst = 1.0;
    int segments = 0;
    for (const auto& cohort : cohorts)
      for (const auto& rec : cohort.segments) {
        ++segments;
        const auto seg = segment_of(cohort, rec);
        for (const auto& [omega, id] : {std::pair{0.0, rec.source_id}, std::pair{1.0, rec.target_id}}) {
          const Subject dec = decode_segment(seg, omega, cfg.grid);
          const Subject anchor = load_subject(subject_files(run_a / "population", id), id, Pathology::Other);
          for (auto c : kForegroundLabels) {
            worst = std::min(worst, dice3d(dec.ed.mask, anchor.ed.mask, c));
            worst = std::min(worst, dice3d(dec.es.mask, anchor.es.mask, c));
          }
        }
      }
    return std::pair{segments > 0 && worst >= kEndpointDice,
                     fmt::format("{} segments; minimum per-class endpoint Dice {:.4f} (>= {})", segments, worst,
                                 kEndpointDice)};
  });

  criterion(6, "Metric oracles", [&] {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> cls(1, 3);
    std::uniform_real_distribution<double> pfg(0.2, 0.8);
    double hd_err = 0.0, dice_err = 0.0;
    int hd_pairs = 0, dice_pairs = 0;
    while (hd_pairs < kOraclePairs) {
      const auto g = random_small_geometry(rng);
      const auto a = random_mask(g, rng, pfg(rng)), b = random_mask(g, rng, pfg(rng));
      const auto c = static_cast<Label>(cls(rng));
      const double want = oracle::hd95(a, b, c);
      if (std::isnan(want)) continue;
      hd_err = std::max(hd_err, std::abs(hd95(a, b, c) - want));
      ++hd_pairs;
    }
    for (; dice_pairs < kOraclePairs; ++dice_pairs) {
      const auto g = random_small_geometry(rng);
      const auto a = random_mask(g, rng, pfg(rng)), b = random_mask(g, rng, pfg(rng));
      for (auto c : kForegroundLabels) dice_err = std::max(dice_err, std::abs(dice3d(a, b, c) - oracle::dice(a, b, c)));
    }
    double sm_err = 0.0;
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_int_distribution<int> dim(2, 9);
    for (int trial = 0; trial < 50; ++trial) {
      const Geometry g{{dim(rng), dim(rng), dim(rng)}, {1.0, 1.0, 1.0}};
      std::array<std::array<double, 3>, 3> A{};
      std::array<double, 3> b{};
      double frob = 0.0;
      for (int k = 0; k < 3; ++k) {
        b[k] = n01(rng);
        for (int a = 0; a < 3; ++a) frob += (A[k][a] = n01(rng)) * A[k][a];
      }
      DeformationField phi{g, std::vector<std::array<double, 3>>(g.voxel_count())};
      for (int z = 0; z < g.dims.nz; ++z)
        for (int y = 0; y < g.dims.ny; ++y)
          for (int x = 0; x < g.dims.nx; ++x)
            for (int k = 0; k < 3; ++k) phi.displacement[g.index(x, y, z)][k] = A[k][0] * x + A[k][1] * y + A[k][2] * z + b[k];
      sm_err = std::max(sm_err, std::abs(smoothness(phi) - frob));
    }
    const bool pass = hd_err <= kHd95Tol && dice_err <= kDiceTol && sm_err <= kSmoothnessTol;
    return std::pair{pass, fmt::format("hd95 max |diff| {:.1e} over {} pairs (<= {}); dice max |diff| {:.1e} over {} "
                                       "pairs (<= {}); smoothness max |diff| {:.1e} on 50 linear fields (<= {})",
                                       hd_err, hd_pairs, kHd95Tol, dice_err, dice_pairs, kDiceTol, sm_err,
                                       kSmoothnessTol)};
  });

  criterion(7, "Activation algebra", [&] {
    const Geometry two{{3, 1, 1}, {1, 1, 1}};
    const auto pm = map_of(two, {{0.1f, 0.05f, 0.8f, 0.05f}, {0.2f, 0.1f, 0.6f, 0.1f}, {0.6f, 0.0f, 0.4f, 0.0f}});
    const double psi = proxy_score(pm, Label::Myo);
    const bool proxy_ok = std::abs(psi - 0.7) <= kProxyTol && proxy_score(pm, Label::RV) == 0.0;

    std::vector<Probs> pts;
    for (int a = 0; a <= 4; ++a)
      for (int b = 0; a + b <= 4; ++b)
        for (int c = 0; a + b + c <= 4; ++c) pts.push_back({a / 4.0f, b / 4.0f, c / 4.0f, (4 - a - b - c) / 4.0f});
    const Geometry g2{{2, 1, 1}, {1, 1, 1}};
    const std::vector<std::array<int, 3>> patterns = {{0, 1, 2}, {0, 0, 1}, {0, 1, 0}, {0, 1, 1}, {0, 0, 0}};
    const std::size_t n = pts.size();
    std::size_t cases = 0, mismatches = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) {
          const std::vector<ProbabilityMap> maps = {map_of(g2, {pts[i], pts[n - 1 - k]}),
                                                    map_of(g2, {pts[j], pts[n - 1 - j]}),
                                                    map_of(g2, {pts[k], pts[n - 1 - i]})};
          for (const auto& sel : patterns) {
            mismatches += fuse({&maps[sel[0]], &maps[sel[1]], &maps[sel[2]]}) != fuse_oracle(maps, sel);
            ++cases;
          }
        }

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> level(0, 4);
    const std::vector<std::function<double(double)>> rescale = {
        [](double x) { return 3 * x * x * x + 0.5; }, [](double x) { return std::exp(x); },
        [](double x) { return std::atan(x) - 2; }};
    int tables = 0, changed = 0;
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<ScoreRow> table;
      for (const auto& s : build_lattice(kD, kQ)) table.push_back({s, {level(rng) / 4.0, u(rng), level(rng) / 4.0}});
      const auto base = select_experts(table);
      for (const auto& f : rescale) {
        auto scaled = table;
        for (auto& r : scaled)
          for (auto& p : r.psi) p = f(p);
        changed += select_experts(scaled).row != base.row;
        ++tables;
      }
    }
    const bool pass = proxy_ok && mismatches == 0 && changed == 0;
    return std::pair{pass, fmt::format("proxy score {:.6f} (0.7 +- {}); fusion {} of {} enumerated 2-voxel cases "
                                       "match the rule oracle; selection changed on {} of {} rescaled tables",
                                       psi, kProxyTol, cases - mismatches, cases, changed, tables)};
  });

  criterion(8, "End-to-end sanity", [&] {
    require_runs();
    const Json m = read_json(run_b / "reports" / "metrics.json");
    const double act = m.at("activation_mean_dice").get<double>();
    const double worst = m.at("worst_cell_dice").get<double>();
    const double median = m.at("median_cell_dice").get<double>();
    const std::size_t cases = m.at("cases").size();
    const bool pass = act >= kEndToEndDice && act >= worst && act >= median && full_b.seconds < kEndToEndBudgetS;
    return std::pair{pass, fmt::format("{} held-out volumes: activation Dice {:.4f} (>= {}), worst cell {:.4f}, "
                                       "median cell {:.4f}; full run {:.1f} s (< {} s)",
                                       cases, act, kEndToEndDice, worst, median, full_b.seconds, kEndToEndBudgetS)};
  });

  criterion(9, "Determinism", [&] {
    require_runs();
    std::string diff;
    std::size_t files = 0;
    for (const char* dir : {"cohort", "lattice", "reports"}) {
      const auto hb = tree_hashes(run_b / dir), hc = tree_hashes(run_c / dir);
      files += hb.size();
      if (hb.empty()) diff = fmt::format("{} is empty", dir);
      else if (hb != hc && diff.empty()) diff = fmt::format("{} differs", dir);
    }
    const bool whole = tree_hashes(run_b) == tree_hashes(run_c);
    const bool stepwise = tree_hashes(run_a / "lattice") == tree_hashes(run_b / "lattice");
    const bool pass = diff.empty() && whole;
    return std::pair{pass, fmt::format("{} cohort, lattice and report files {}; whole output trees {}; stepwise "
                                       "run lattice {}",
                                       files, diff.empty() ? "bit-identical" : diff,
                                       whole ? "identical" : "differ", stepwise ? "identical" : "differs")};
  });

  fmt::print("{} of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
