#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pathco/anchors.hpp"
#include "pathco/error.hpp"
#include "pathco/metrics.hpp"
#include "pathco/preprocess.hpp"
#include "pathco/serialize.hpp"
#include "pathco/volume.hpp"

namespace pathco {

/// Run configuration. Paths are relative to the output directory.
struct PipelineConfig {
  std::string cohort_dir = "cohort";
  std::string lattice_dir = "lattice";
  std::string reports_dir = "reports";
  Regime regime = Regime::A7;
  std::vector<Pathology> pathologies{Pathology::DCM, Pathology::HCM, Pathology::MINF, Pathology::ARV};
  std::vector<double> D{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<int> Q{2, 4, 6, 8, 10};
  int N = 32;
  int J = 50;
  Geometry grid{{64, 64, 64}, {2.5, 2.5, 2.5}};
  std::uint64_t seed = 0;
  int healthy = 20;
  int per_pathology = 20;
  int test_cases_per_pathology = 3;
  bool preprocess_enabled = false;
  PreprocessSpec preprocess;
  LossWeights loss_weights;
};

/// Throws ConfigError on unknown keys, wrong types or invalid values.
PipelineConfig config_from_json(const Json& j);
Json to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);

enum class Stage { Population, Severity, Anchors, Synthesis, Siv, Lattice, TestSet, Infer, Eval };
inline constexpr int kStageCount = 9;
std::string_view to_string(Stage stage);

struct RunOptions {
  std::filesystem::path out = "out";
  unsigned jobs = 1;
  Stage until = Stage::Eval;
  std::function<void(const std::string&)> log;
};

struct StageRecord {
  Stage stage;
  std::string hash;
  bool cached = false;
  std::vector<std::string> files;  // relative to the output directory
};

struct CellScore {
  ExpertSpec spec;
  double mean_dice = 0.0;
};

struct RunReport {
  std::vector<StageRecord> stages;
  std::vector<MetricReport> cases;
  std::optional<MetricReport> mean;
  std::vector<CellScore> cells;
  double activation_dice = 0.0;  // mean foreground Dice of dynamic activation
  double worst_cell_dice = 0.0;
  double median_cell_dice = 0.0;
};

/// Runs the stages up to options.until. Stages whose input hash and output
/// files match the run manifest are skipped. Errors carry the stage name.
RunReport run_pipeline(const PipelineConfig& config, const RunOptions& options);

/// Biomarkers of subjects under every pathology's severity function and
/// the percentile statistics of each pathology over Healthy plus that
/// pathology.
struct SeverityTable {
  std::map<std::string, std::map<Pathology, double>> biomarkers;
  std::map<Pathology, NormalizationStats> stats;
};
SeverityTable compute_severity(const std::vector<Subject>& subjects,
                               const std::vector<Pathology>& pathologies, unsigned jobs = 1);
Json to_json(const SeverityTable& table, const std::vector<Subject>& subjects);

/// Held-out case: interpolation of the generating latents of two adjacent
/// anchors of one pathology, decoded with a fresh texture.
struct TestCase {
  std::string id;
  Pathology pathology = Pathology::Other;
  int segment = 0;
  double u = 0.0;
  Subject subject;
};

/// Process exit code for an error code: 2 configuration, 3 data,
/// 4 internal invariant.
int exit_code_for(ErrorCode code);

}  // namespace pathco
