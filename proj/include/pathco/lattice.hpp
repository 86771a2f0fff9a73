#pragma once

#include <compare>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pathco/siv.hpp"
#include "pathco/volume.hpp"

namespace pathco {

struct ExpertSpec {
  double delta_gamma = 0.0;
  int alpha = 1;

  auto operator<=>(const ExpertSpec&) const = default;
  bool operator==(const ExpertSpec&) const = default;
};

std::string to_string(const ExpertSpec& spec);

/// Cartesian product of the deduplicated sets, delta_gamma-major then
/// alpha, both ascending. Throws EmptySet.
std::vector<ExpertSpec> build_lattice(std::vector<double> D, std::vector<int> Q);

/// Labeled training images shared by every exemplar expert. Samples are
/// phases of subjects; each carries a zero-mean unit-norm copy of its image
/// so NCC is a dot product.
class SampleBank {
 public:
  struct Sample {
    std::string id;
    std::string subject_id;
    VoxelGrid image;
    LabelMask mask;
    std::vector<float> normalized;
  };

  /// Throws GeometryMismatch against earlier samples, InvalidArgument on a
  /// duplicate id.
  void add(std::string id, std::string subject_id, Phase phase);
  void add_subject(const Subject& subject);

  std::size_t size() const { return samples_.size(); }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  const Geometry& geometry() const { return geometry_; }
  /// Sample indices of a subject in insertion order; empty if unknown.
  const std::vector<std::size_t>& samples_of(const std::string& subject_id) const;
  std::size_t index_of(const std::string& sample_id) const;

  /// NCC of an image against every sample (0 for a constant image).
  std::vector<double> similarity(const VoxelGrid& image) const;
  /// Pairwise NCC, computed once.
  void compute_pairwise(unsigned jobs = 1);
  double pairwise(std::size_t i, std::size_t j) const;
  bool has_pairwise() const { return !pairwise_.empty(); }

 private:
  Geometry geometry_;
  std::vector<Sample> samples_;
  std::map<std::string, std::vector<std::size_t>> by_subject_;
  std::map<std::string, std::size_t> by_id_;
  std::vector<double> pairwise_;
};

enum class ExpertKind { Exemplar, External };
std::string_view to_string(ExpertKind kind);
ExpertKind parse_expert_kind(std::string_view name);

inline constexpr std::array<int, 3> kNeighborGrid = {1, 3, 5};
inline constexpr std::array<double, 3> kTemperatureGrid = {0.05, 0.1, 0.2};

struct Expert {
  ExpertSpec spec;
  ExpertKind kind = ExpertKind::Exemplar;
  int k = 1;
  double tau = 0.1;
  double val_dice = 0.0;  // mean foreground Dice of the chosen (k, tau)
  std::vector<std::string> sample_ids;  // retained samples, bank order
  std::filesystem::path external_dir;
};

/// Retains the plan's training samples and picks (k, tau) from the fixed
/// grid by mean foreground Dice on the validation samples (first grid point
/// wins ties). Throws EmptyTrainSet, InvalidArgument for ids missing from
/// the bank.
Expert train_expert(const ExpertSpec& spec, const SIVPlan& plan, const SampleBank& bank);

/// Validation Dice of every grid point, neighbor-major.
std::vector<double> validation_grid(const std::vector<std::size_t>& retained,
                                    const std::vector<std::size_t>& validation,
                                    const SampleBank& bank);

Expert external_expert(const ExpertSpec& spec, std::filesystem::path dir);
/// <dir>/<test_id>/<dg>_<alpha>.plv
std::filesystem::path external_map_path(const Expert& expert, const std::string& test_id);

/// Exemplar vote over the top-k retained samples with softmax(s/tau)
/// weights; `similarity` holds the image's NCC against every bank sample.
ProbabilityMap predict_exemplar(const Expert& expert, const SampleBank& bank,
                                const std::vector<double>& similarity);

struct Lattice {
  std::vector<double> D;
  std::vector<int> Q;
  std::vector<Expert> cells;  // lattice order
  std::shared_ptr<const SampleBank> bank;
};

/// Throws GeometryMismatch, MissingExternalMap.
ProbabilityMap predict(const Expert& expert, const SampleBank* bank, const VoxelGrid& image,
                       const std::string& test_id = {});

/// Per-cell maps in lattice order. Errors name the failing cell.
std::vector<std::pair<ExpertSpec, ProbabilityMap>> fan_out(const Lattice& lattice,
                                                           const VoxelGrid& image,
                                                           const std::string& test_id = {},
                                                           unsigned jobs = 1);

/// Calls fn(cell index, map) for every cell in lattice order, computing
/// `jobs` maps at a time.
void for_each_prediction(const Lattice& lattice, const VoxelGrid& image, const std::string& test_id,
                         unsigned jobs,
                         const std::function<void(std::size_t, const ProbabilityMap&)>& fn);

/// Trains one expert per spec on its plan. Throws InvalidArgument when a
/// plan is missing.
Lattice train_lattice(const std::vector<double>& D, const std::vector<int>& Q,
                      const std::map<ExpertSpec, SIVPlan>& plans,
                      std::shared_ptr<const SampleBank> bank, unsigned jobs = 1);

}  // namespace pathco
