#include "pathco/activation.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "pathco/error.hpp"

namespace pathco {

double proxy_score(const ProbabilityMap& pm, Label c) {
  const int ci = static_cast<int>(c);
  require(ci >= 1 && ci < kNumClasses, ErrorCode::InvalidArgument,
          "proxy score needs a foreground class");
  const std::size_t n = pm.voxel_count();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t v = 0; v < n; ++v) {
    const float pc = pm.prob(ci, v);
    bool wins = true;
    for (int k = 0; k < kNumClasses && wins; ++k) {
      const float pk = pm.prob(k, v);
      wins = k < ci ? pk < pc : (k == ci || pk <= pc);
    }
    if (wins) {
      sum += pc;
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

Selection select_experts(const std::vector<ScoreRow>& table) {
  require(!table.empty(), ErrorCode::EmptyTable, "score table is empty");
  Selection sel;
  for (int c = 0; c < 3; ++c) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < table.size(); ++r) {
      const double a = table[r].psi[c], b = table[best].psi[c];
      if (a > b || (a == b && table[r].spec < table[best].spec)) best = r;
    }
    sel.row[c] = best;
    sel.spec[c] = table[best].spec;
    sel.psi[c] = table[best].psi[c];
  }
  return sel;
}

LabelMask fuse(const std::array<const ProbabilityMap*, 3>& selected) {
  for (const auto* pm : selected) require(pm != nullptr, ErrorCode::InvalidArgument, "missing selected map");
  const Geometry& g = selected[0]->geometry();
  for (const auto* pm : selected) require_same_geometry(g, pm->geometry(), "fuse");
  std::vector<const ProbabilityMap*> distinct;
  for (const auto* pm : selected)
    if (std::find(distinct.begin(), distinct.end(), pm) == distinct.end()) distinct.push_back(pm);

  const std::size_t n = g.voxel_count();
  std::vector<std::uint8_t> labels(n);
  for (std::size_t v = 0; v < n; ++v) {
    double bg = 0.0;
    for (const auto* pm : distinct) bg += pm->prob(0, v);
    double best = bg / static_cast<double>(distinct.size());
    int label = 0;
    for (int c = 1; c < kNumClasses; ++c) {
      const double p = selected[c - 1]->prob(c, v);
      if (p > best) {
        best = p;
        label = c;
      }
    }
    labels[v] = static_cast<std::uint8_t>(label);
  }
  return LabelMask(g, std::move(labels));
}

ActivationResult activate(const Lattice& lattice, const VoxelGrid& image, const std::string& test_id,
                          unsigned jobs,
                          const std::function<void(std::size_t, const ProbabilityMap&)>& observer) {
  require(!lattice.cells.empty(), ErrorCode::EmptyTable, "lattice has no cells");
  ActivationResult res;
  res.scores.resize(lattice.cells.size());
  // Running per-class best; strict > keeps the earlier cell on ties.
  std::array<ProbabilityMap, 3> kept;
  std::array<double, 3> kept_psi{-1.0, -1.0, -1.0};
  for_each_prediction(lattice, image, test_id, jobs, [&](std::size_t i, const ProbabilityMap& pm) {
    ScoreRow& row = res.scores[i];
    row.spec = lattice.cells[i].spec;
    for (int c = 0; c < 3; ++c) {
      row.psi[c] = proxy_score(pm, kForegroundLabels[c]);
      if (row.psi[c] > kept_psi[c]) {
        kept_psi[c] = row.psi[c];
        kept[c] = pm;
      }
    }
    if (observer) observer(i, pm);
  });
  res.selection = select_experts(res.scores);
  for (int c = 0; c < 3; ++c)
    require(res.scores[res.selection.row[c]].psi[c] == kept_psi[c], ErrorCode::InvariantViolation,
            "streamed selection disagrees with the score table");
  // Identical selected cells must fuse as one map.
  std::array<const ProbabilityMap*, 3> ptr{};
  for (int c = 0; c < 3; ++c) {
    ptr[c] = &kept[c];
    for (int d = 0; d < c; ++d)
      if (res.selection.row[d] == res.selection.row[c]) ptr[c] = ptr[d];
  }
  res.mask = fuse(ptr);
  return res;
}

}  // namespace pathco
