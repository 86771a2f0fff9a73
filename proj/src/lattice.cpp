#include "pathco/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "pathco/error.hpp"
#include "pathco/parallel.hpp"
#include "pathco/volume_io.hpp"

namespace pathco {

namespace {

// Eight independent accumulators keep the sum order fixed and the loop fast.
double dot(const float* a, const float* b, std::size_t n) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) acc[l] += static_cast<double>(a[i + l]) * b[i + l];
  for (; i < n; ++i) acc[0] += static_cast<double>(a[i]) * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

std::vector<float> normalize_image(std::span<const float> v) {
  double mean = 0.0;
  for (float x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (float x : v) ss += (x - mean) * (x - mean);
  std::vector<float> out(v.size(), 0.0f);
  if (ss <= 0.0) return out;
  const double inv = 1.0 / std::sqrt(ss);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>((v[i] - mean) * inv);
  return out;
}

// Top-k by similarity, ties to the lower bank index.
std::vector<std::size_t> rank_by_similarity(std::vector<std::size_t> candidates,
                                            const std::function<double(std::size_t)>& sim,
                                            std::size_t k) {
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(candidates.size());
  for (auto c : candidates) scored.push_back({sim(c), c});
  k = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = scored[i].second;
  return out;
}

std::vector<double> softmax_weights(const std::vector<double>& s, double tau) {
  std::vector<double> w(s.size());
  const double smax = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) z += (w[i] = std::exp((s[i] - smax) / tau));
  for (auto& x : w) x /= z;
  return w;
}

int vote(const std::uint8_t* labels, const double* w, std::size_t k) {
  double acc[kNumClasses] = {};
  for (std::size_t i = 0; i < k; ++i) acc[labels[i]] += w[i];
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c)
    if (acc[c] > acc[best]) best = c;
  return best;
}

std::vector<std::size_t> retained_indices(const Expert& expert, const SampleBank& bank) {
  std::vector<std::size_t> out;
  out.reserve(expert.sample_ids.size());
  for (const auto& id : expert.sample_ids) out.push_back(bank.index_of(id));
  return out;
}

std::string format_dg(double dg) { return fmt::format("{:g}", dg); }

}  // namespace

std::string to_string(const ExpertSpec& spec) {
  return fmt::format("(dg={}, alpha={})", format_dg(spec.delta_gamma), spec.alpha);
}

std::vector<ExpertSpec> build_lattice(std::vector<double> D, std::vector<int> Q) {
  require(!D.empty(), ErrorCode::EmptySet, "granularity set D is empty");
  require(!Q.empty(), ErrorCode::EmptySet, "interleaving set Q is empty");
  for (double d : D)
    require(std::isfinite(d) && d > 0, ErrorCode::InvalidArgument,
            fmt::format("granularity {} must be positive", d));
  for (int q : Q) require(q >= 1, ErrorCode::InvalidArgument, fmt::format("alpha {} must be >= 1", q));
  std::sort(D.begin(), D.end());
  D.erase(std::unique(D.begin(), D.end()), D.end());
  std::sort(Q.begin(), Q.end());
  Q.erase(std::unique(Q.begin(), Q.end()), Q.end());
  std::vector<ExpertSpec> out;
  for (double d : D)
    for (int q : Q) out.push_back({d, q});
  return out;
}

void SampleBank::add(std::string id, std::string subject_id, Phase phase) {
  require_same_geometry(phase.image.geometry(), phase.mask.geometry(), "bank sample");
  if (samples_.empty()) {
    geometry_ = phase.image.geometry();
  } else {
    require_same_geometry(geometry_, phase.image.geometry(), fmt::format("bank sample {}", id));
  }
  require(!by_id_.count(id), ErrorCode::InvalidArgument, fmt::format("duplicate sample id {}", id));
  Sample s;
  s.normalized = normalize_image(phase.image.values());
  s.id = std::move(id);
  s.subject_id = std::move(subject_id);
  s.image = std::move(phase.image);
  s.mask = std::move(phase.mask);
  by_id_[s.id] = samples_.size();
  by_subject_[s.subject_id].push_back(samples_.size());
  samples_.push_back(std::move(s));
  pairwise_.clear();
}

void SampleBank::add_subject(const Subject& subject) {
  add(subject.id + "_ED", subject.id, subject.ed);
  add(subject.id + "_ES", subject.id, subject.es);
}

const std::vector<std::size_t>& SampleBank::samples_of(const std::string& subject_id) const {
  static const std::vector<std::size_t> kNone;
  const auto it = by_subject_.find(subject_id);
  return it == by_subject_.end() ? kNone : it->second;
}

std::size_t SampleBank::index_of(const std::string& sample_id) const {
  const auto it = by_id_.find(sample_id);
  require(it != by_id_.end(), ErrorCode::InvalidArgument,
          fmt::format("sample {} is not in the bank", sample_id));
  return it->second;
}

std::vector<double> SampleBank::similarity(const VoxelGrid& image) const {
  require_same_geometry(geometry_, image.geometry(), "exemplar similarity");
  const auto z = normalize_image(image.values());
  std::vector<double> out(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i)
    out[i] = dot(z.data(), samples_[i].normalized.data(), z.size());
  return out;
}

void SampleBank::compute_pairwise(unsigned jobs) {
  const std::size_t n = samples_.size();
  std::vector<double> m(n * n, 0.0);
  parallel_for(n, jobs, [&](std::size_t i) {
    for (std::size_t j = i; j < n; ++j) {
      m[i * n + j] = dot(samples_[i].normalized.data(), samples_[j].normalized.data(),
                         samples_[i].normalized.size());
    }
  });
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) m[i * n + j] = m[j * n + i];
  pairwise_ = std::move(m);
}

double SampleBank::pairwise(std::size_t i, std::size_t j) const {
  const std::size_t n = samples_.size();
  if (!pairwise_.empty()) return pairwise_[i * n + j];
  const auto a = std::min(i, j), b = std::max(i, j);
  return dot(samples_[a].normalized.data(), samples_[b].normalized.data(),
             samples_[a].normalized.size());
}

std::string_view to_string(ExpertKind kind) {
  return kind == ExpertKind::Exemplar ? "exemplar" : "external";
}

ExpertKind parse_expert_kind(std::string_view name) {
  if (name == "exemplar") return ExpertKind::Exemplar;
  if (name == "external") return ExpertKind::External;
  fail(ErrorCode::InvalidArgument, fmt::format("unknown expert kind '{}'", name));
}

std::vector<double> validation_grid(const std::vector<std::size_t>& retained,
                                    const std::vector<std::size_t>& validation,
                                    const SampleBank& bank) {
  constexpr std::size_t G = kNeighborGrid.size() * kTemperatureGrid.size();
  std::vector<double> total(G, 0.0);
  if (validation.empty() || retained.empty()) return total;
  const std::size_t kmax = static_cast<std::size_t>(kNeighborGrid.back());

  for (const auto v : validation) {
    const auto top = rank_by_similarity(retained, [&](std::size_t r) { return bank.pairwise(v, r); }, kmax);
    const std::size_t m = top.size();
    std::vector<double> s(m);
    for (std::size_t i = 0; i < m; ++i) s[i] = bank.pairwise(v, top[i]);

    std::array<std::size_t, G> kk{};
    std::array<std::vector<double>, G> w;
    for (std::size_t a = 0; a < kNeighborGrid.size(); ++a)
      for (std::size_t b = 0; b < kTemperatureGrid.size(); ++b) {
        const std::size_t g = a * kTemperatureGrid.size() + b;
        kk[g] = std::min<std::size_t>(kNeighborGrid[a], m);
        w[g] = softmax_weights(std::vector<double>(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(kk[g])),
                               kTemperatureGrid[b]);
      }

    const auto& truth = bank[v].mask;
    std::vector<const std::uint8_t*> lab(m);
    for (std::size_t i = 0; i < m; ++i) lab[i] = bank[top[i]].mask.labels().data();
    std::array<std::array<std::size_t, kNumClasses>, G> pred{}, both{};
    std::array<std::size_t, kNumClasses> tcount{};
    std::uint8_t l[8];
    for (std::size_t x = 0; x < truth.size(); ++x) {
      const std::uint8_t t = truth[x];
      bool same = true;
      for (std::size_t i = 0; i < m; ++i) {
        l[i] = lab[i][x];
        same = same && l[i] == l[0];
      }
      tcount[t]++;
      if (same) {
        if (l[0] == 0) continue;
        for (std::size_t g = 0; g < G; ++g) {
          pred[g][l[0]]++;
          both[g][l[0]] += l[0] == t;
        }
        continue;
      }
      for (std::size_t g = 0; g < G; ++g) {
        const int p = vote(l, w[g].data(), kk[g]);
        pred[g][p]++;
        both[g][p] += p == t;
      }
    }
    for (std::size_t g = 0; g < G; ++g) {
      double d = 0.0;
      for (int c = 1; c < kNumClasses; ++c) {
        const std::size_t den = pred[g][c] + tcount[c];
        d += den == 0 ? 1.0 : 2.0 * static_cast<double>(both[g][c]) / static_cast<double>(den);
      }
      total[g] += d / 3.0;
    }
  }
  for (auto& t : total) t /= static_cast<double>(validation.size());
  return total;
}

Expert train_expert(const ExpertSpec& spec, const SIVPlan& plan, const SampleBank& bank) {
  std::set<std::size_t> retained_set;
  for (const auto& id : plan.train_ids) {
    const auto& idx = bank.samples_of(id);
    require(!idx.empty(), ErrorCode::InvalidArgument,
            fmt::format("training subject {} has no bank samples", id));
    retained_set.insert(idx.begin(), idx.end());
  }
  require(!retained_set.empty(), ErrorCode::EmptyTrainSet,
          fmt::format("plan for {} has no training samples", to_string(spec)));
  std::vector<std::size_t> validation;
  for (const auto& id : plan.val_ids) {
    const auto& idx = bank.samples_of(id);
    require(!idx.empty(), ErrorCode::InvalidArgument,
            fmt::format("validation subject {} has no bank samples", id));
    validation.insert(validation.end(), idx.begin(), idx.end());
  }
  const std::vector<std::size_t> retained(retained_set.begin(), retained_set.end());

  Expert e;
  e.spec = spec;
  e.kind = ExpertKind::Exemplar;
  for (auto i : retained) e.sample_ids.push_back(bank[i].id);
  const auto scores = validation_grid(retained, validation, bank);
  std::size_t best = 0;
  for (std::size_t g = 1; g < scores.size(); ++g)
    if (scores[g] > scores[best]) best = g;
  e.k = kNeighborGrid[best / kTemperatureGrid.size()];
  e.tau = kTemperatureGrid[best % kTemperatureGrid.size()];
  e.val_dice = scores[best];
  return e;
}

Expert external_expert(const ExpertSpec& spec, std::filesystem::path dir) {
  Expert e;
  e.spec = spec;
  e.kind = ExpertKind::External;
  e.k = 0;
  e.tau = 0.0;
  e.external_dir = std::move(dir);
  return e;
}

std::filesystem::path external_map_path(const Expert& expert, const std::string& test_id) {
  return expert.external_dir / test_id /
         fmt::format("{}_{}.plv", format_dg(expert.spec.delta_gamma), expert.spec.alpha);
}

ProbabilityMap predict_exemplar(const Expert& expert, const SampleBank& bank,
                                const std::vector<double>& similarity) {
  require(expert.k >= 1 && expert.tau > 0, ErrorCode::InvalidArgument,
          fmt::format("exemplar {} needs k >= 1 and tau > 0", to_string(expert.spec)));
  auto retained = retained_indices(expert, bank);
  require(!retained.empty(), ErrorCode::EmptyTrainSet,
          fmt::format("exemplar {} retains no samples", to_string(expert.spec)));
  std::sort(retained.begin(), retained.end());
  const auto top = rank_by_similarity(retained, [&](std::size_t i) { return similarity[i]; },
                                      static_cast<std::size_t>(expert.k));
  std::vector<double> s;
  for (auto i : top) s.push_back(similarity[i]);
  const auto w = softmax_weights(s, expert.tau);

  const Geometry& g = bank.geometry();
  const std::size_t n = g.voxel_count();
  std::vector<double> acc(kNumClasses * n, 0.0);
  for (std::size_t i = 0; i < top.size(); ++i) {
    const auto labels = bank[top[i]].mask.labels();
    for (std::size_t x = 0; x < n; ++x) acc[labels[x] * n + x] += w[i];
  }
  std::vector<float> probs(acc.begin(), acc.end());
  return ProbabilityMap(g, std::move(probs));
}

ProbabilityMap predict(const Expert& expert, const SampleBank* bank, const VoxelGrid& image,
                       const std::string& test_id) {
  if (expert.kind == ExpertKind::External) {
    const auto path = external_map_path(expert, test_id);
    require(std::filesystem::exists(path), ErrorCode::MissingExternalMap,
            fmt::format("no stored map {} for {}", path.string(), to_string(expert.spec)));
    auto pm = load_probability_map(path);
    require_same_geometry(pm.geometry(), image.geometry(), "external map");
    return pm;
  }
  require(bank != nullptr, ErrorCode::InvalidArgument, "exemplar prediction needs a sample bank");
  return predict_exemplar(expert, *bank, bank->similarity(image));
}

void for_each_prediction(const Lattice& lattice, const VoxelGrid& image, const std::string& test_id,
                         unsigned jobs,
                         const std::function<void(std::size_t, const ProbabilityMap&)>& fn) {
  std::vector<double> sim;
  const bool any_exemplar = std::any_of(lattice.cells.begin(), lattice.cells.end(),
                                        [](const Expert& e) { return e.kind == ExpertKind::Exemplar; });
  if (any_exemplar) {
    require(lattice.bank != nullptr, ErrorCode::InvalidArgument, "lattice has no sample bank");
    require_same_geometry(lattice.bank->geometry(), image.geometry(), "lattice input");
    sim = lattice.bank->similarity(image);
  }
  const std::size_t n = lattice.cells.size();
  const std::size_t batch = std::max(1u, jobs);
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t len = std::min(batch, n - start);
    std::vector<ProbabilityMap> maps(len);
    parallel_for(len, jobs, [&](std::size_t i) {
      const Expert& e = lattice.cells[start + i];
      try {
        maps[i] = e.kind == ExpertKind::Exemplar ? predict_exemplar(e, *lattice.bank, sim)
                                                 : predict(e, nullptr, image, test_id);
      } catch (const Error& err) {
        throw Error(err.code(), fmt::format("cell {}: {}", to_string(e.spec), err.detail()));
      }
    });
    for (std::size_t i = 0; i < len; ++i) fn(start + i, maps[i]);
  }
}

std::vector<std::pair<ExpertSpec, ProbabilityMap>> fan_out(const Lattice& lattice,
                                                           const VoxelGrid& image,
                                                           const std::string& test_id,
                                                           unsigned jobs) {
  std::vector<std::pair<ExpertSpec, ProbabilityMap>> out;
  out.reserve(lattice.cells.size());
  for_each_prediction(lattice, image, test_id, jobs, [&](std::size_t i, const ProbabilityMap& pm) {
    out.emplace_back(lattice.cells[i].spec, pm);
  });
  return out;
}

Lattice train_lattice(const std::vector<double>& D, const std::vector<int>& Q,
                      const std::map<ExpertSpec, SIVPlan>& plans,
                      std::shared_ptr<const SampleBank> bank, unsigned jobs) {
  const auto specs = build_lattice(D, Q);
  require(bank != nullptr, ErrorCode::InvalidArgument, "training needs a sample bank");
  Lattice lat;
  lat.D = D;
  lat.Q = Q;
  std::sort(lat.D.begin(), lat.D.end());
  lat.D.erase(std::unique(lat.D.begin(), lat.D.end()), lat.D.end());
  std::sort(lat.Q.begin(), lat.Q.end());
  lat.Q.erase(std::unique(lat.Q.begin(), lat.Q.end()), lat.Q.end());
  lat.cells.resize(specs.size());
  parallel_for(specs.size(), jobs, [&](std::size_t i) {
    const auto it = plans.find(specs[i]);
    require(it != plans.end(), ErrorCode::InvalidArgument,
            fmt::format("no SIV plan for cell {}", to_string(specs[i])));
    try {
      lat.cells[i] = train_expert(specs[i], it->second, *bank);
    } catch (const Error& err) {
      throw Error(err.code(), fmt::format("cell {}: {}", to_string(specs[i]), err.detail()));
    }
  });
  lat.bank = std::move(bank);
  return lat;
}

}  // namespace pathco
