#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pathco/activation.hpp"
#include "pathco/error.hpp"
#include "pathco/lattice.hpp"
#include "pathco/metrics.hpp"
#include "pathco/pipeline.hpp"
#include "pathco/preprocess.hpp"
#include "pathco/serialize.hpp"
#include "pathco/volume_io.hpp"

namespace fs = std::filesystem;
using namespace pathco;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
  std::string out = "out";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "Pipeline configuration (JSON)");
  sub->add_option("--seed", c.seed, "Override the configured seed");
  sub->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--out", c.out, "Output directory");
}

PipelineConfig config_of(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

RunReport run_until(const Common& c, Stage stage) {
  RunOptions opt;
  opt.out = c.out;
  opt.jobs = c.jobs;
  opt.until = stage;
  opt.log = [](const std::string& s) { std::cerr << s << "\n"; };
  return run_pipeline(config_of(c), opt);
}

// Subject directory: manifest.json {subjects:[{id, pathology, files}]}.
int severity_of_directory(const Common& c, const fs::path& dir) {
  const PipelineConfig cfg = config_of(c);
  const Json j = read_json(dir / "manifest.json");
  std::vector<Subject> subjects;
  for (const auto& s : j.at("subjects")) {
    Subject sub = load_subject(subject_files_from_json(s.at("files"), dir), s.at("id").get<std::string>(),
                               parse_pathology(s.at("pathology").get<std::string>()));
    subjects.push_back(cfg.preprocess_enabled ? preprocess(sub, cfg.preprocess) : sub);
  }
  const auto table = compute_severity(subjects, cfg.pathologies, c.jobs);
  write_json(fs::path(c.out) / "severity" / "biomarkers.json", to_json(table, subjects));
  for (const auto& [p, st] : table.stats)
    write_json(fs::path(c.out) / "severity" / fmt::format("stats_{}.json", to_string(p)), to_json(st));
  std::cout << fmt::format("{} subjects -> {}\n", subjects.size(), (fs::path(c.out) / "severity").string());
  return 0;
}

int infer_image(const Common& c, const fs::path& image_path, const std::string& id) {
  run_until(c, Stage::Lattice);
  const PipelineConfig cfg = config_of(c);
  const Lattice lattice = load_lattice(fs::path(c.out) / cfg.lattice_dir);
  const auto res = activate(lattice, load_image(image_path), id, c.jobs);
  const fs::path dir = fs::path(c.out) / "inference" / id;
  store_volume(dir / "mask.plv", res.mask);
  write_json(dir / "activation.json", to_json(res, (dir / "mask.plv").string()));
  std::cout << fmt::format("mask -> {}\n", (dir / "mask.plv").string());
  return 0;
}

int eval_pair(const fs::path& pred, const fs::path& truth) {
  const auto r = evaluate_masks(load_mask(pred), load_mask(truth), pred.stem().string());
  std::cout << format_table({r});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pathology-constrained lattice-of-experts pipeline"};
  app.require_subcommand(1);
  Common common;

  auto* phantoms = app.add_subcommand("phantoms", "Generate the phantom population");
  auto* severity = app.add_subcommand("severity", "Biomarkers and severity statistics");
  auto* anchors = app.add_subcommand("anchors", "Select the anchor set");
  auto* synth = app.add_subcommand("synth", "Synthesize the virtual cohort");
  auto* siv = app.add_subcommand("siv", "Emit SIV plans for every lattice cell");
  auto* train = app.add_subcommand("train", "Train the lattice of experts");
  auto* infer = app.add_subcommand("infer", "Fan-out and dynamic activation");
  auto* eval = app.add_subcommand("eval", "Metric tables");
  auto* run = app.add_subcommand("run", "Full pipeline");
  for (auto* s : {phantoms, severity, anchors, synth, siv, train, infer, eval, run}) add_common(s, common);

  std::string subjects_dir, image, image_id = "case", pred, truth;
  severity->add_option("--subjects", subjects_dir, "Subject directory with manifest.json");
  infer->add_option("--image", image, "Single PLV1 image to segment");
  infer->add_option("--id", image_id, "Case id for --image");
  eval->add_option("--pred", pred, "Predicted mask (PLV1)");
  eval->add_option("--truth", truth, "Reference mask (PLV1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (phantoms->parsed()) run_until(common, Stage::Population);
    else if (severity->parsed()) {
      if (!subjects_dir.empty()) return severity_of_directory(common, subjects_dir);
      run_until(common, Stage::Severity);
    } else if (anchors->parsed()) run_until(common, Stage::Anchors);
    else if (synth->parsed()) run_until(common, Stage::Synthesis);
    else if (siv->parsed()) run_until(common, Stage::Siv);
    else if (train->parsed()) run_until(common, Stage::Lattice);
    else if (infer->parsed()) {
      if (!image.empty()) return infer_image(common, image, image_id);
      run_until(common, Stage::Infer);
    } else if (eval->parsed()) {
      if (!pred.empty() || !truth.empty()) {
        if (pred.empty() || truth.empty()) {
          std::cerr << "eval needs both --pred and --truth\n";
          return 2;
        }
        return eval_pair(pred, truth);
      }
      const auto r = run_until(common, Stage::Eval);
      std::cout << fmt::format("activation mean foreground Dice {:.4f}; worst cell {:.4f}; median cell {:.4f}\n",
                               r.activation_dice, r.worst_cell_dice, r.median_cell_dice);
    } else if (run->parsed()) {
      const auto r = run_until(common, Stage::Eval);
      std::cout << fmt::format("activation mean foreground Dice {:.4f}; worst cell {:.4f}; median cell {:.4f}\n",
                               r.activation_dice, r.worst_cell_dice, r.median_cell_dice);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
