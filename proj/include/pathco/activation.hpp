#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "pathco/lattice.hpp"
#include "pathco/volume.hpp"

namespace pathco {

/// Mean class-c probability over the voxels whose argmax is c; 0 when no
/// voxel is labeled c. c must be a foreground class.
double proxy_score(const ProbabilityMap& pm, Label c);

/// Scores of one expert, indexed RV, Myo, Pool.
struct ScoreRow {
  ExpertSpec spec;
  std::array<double, 3> psi{};
};

struct Selection {
  std::array<std::size_t, 3> row{};  // index into the score table, RV, Myo, Pool
  std::array<ExpertSpec, 3> spec{};
  std::array<double, 3> psi{};
};

/// Per-class argmax; equal scores go to the cell earlier in lattice order.
/// Throws EmptyTable.
Selection select_experts(const std::vector<ScoreRow>& table);

/// Per voxel: class c scores its probability under the map selected for c,
/// background scores the mean background probability of the distinct
/// selected maps; argmax with ties to the lower class. Maps are RV, Myo,
/// Pool; the same map may appear more than once. Throws GeometryMismatch.
LabelMask fuse(const std::array<const ProbabilityMap*, 3>& selected);

struct ActivationResult {
  std::vector<ScoreRow> scores;  // lattice order
  Selection selection;
  LabelMask mask;
};

/// Scores every cell, selects per class and fuses. `observer`, if set, sees
/// each cell's map in lattice order. Does not modify the lattice.
ActivationResult activate(const Lattice& lattice, const VoxelGrid& image,
                          const std::string& test_id = {}, unsigned jobs = 1,
                          const std::function<void(std::size_t, const ProbabilityMap&)>& observer = nullptr);

}  // namespace pathco
