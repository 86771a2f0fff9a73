#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "pathco/lattice.hpp"
#include "pathco/serialize.hpp"
#include "pathco/volume_io.hpp"
#include "test_util.hpp"

using namespace pathco;
using namespace testutil;

namespace {

const Geometry kGrid = grid(6, 5, 4);

Phase random_phase(std::mt19937_64& rng) { return {random_image(kGrid, rng), random_mask(kGrid, rng, 0.5)}; }

// Bank of n single-sample subjects "S0".. with seeded random phases.
std::shared_ptr<SampleBank> random_bank(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto bank = std::make_shared<SampleBank>();
  for (int i = 0; i < n; ++i) bank->add("S" + std::to_string(i) + "_ED", "S" + std::to_string(i), random_phase(rng));
  return bank;
}

Expert exemplar(int k, double tau, std::vector<std::string> ids) {
  Expert e;
  e.spec = {0.1, 2};
  e.k = k;
  e.tau = tau;
  e.sample_ids = std::move(ids);
  return e;
}

void check_simplex(const ProbabilityMap& pm) {
  const std::size_t n = pm.geometry().voxel_count();
  for (std::size_t v = 0; v < n; ++v) {
    double s = 0;
    for (int c = 0; c < kNumClasses; ++c) s += pm.prob(c, v);
    REQUIRE(std::abs(s - 1.0) < 1e-6);
  }
}

bool same_map(const ProbabilityMap& a, const ProbabilityMap& b) {
  return a == b;
}

// Independent vote: Pearson similarity, top-k by (similarity desc, index),
// softmax over the kept scores, weighted one-hot sum.
std::vector<double> vote_oracle(const SampleBank& bank, const std::vector<std::size_t>& kept,
                                const VoxelGrid& image, int k, double tau) {
  auto pearson = [](std::span<const float> a, std::span<const float> b) {
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
  };
  std::vector<std::pair<double, std::size_t>> s;
  for (auto i : kept) s.push_back({-pearson(image.values(), bank[i].image.values()), i});
  std::sort(s.begin(), s.end());
  s.resize(std::min<std::size_t>(k, s.size()));
  double z = 0;
  std::vector<double> w;
  for (auto& [neg, i] : s) {
    w.push_back(std::exp((-neg + s.front().first) / tau));
    z += w.back();
  }
  const std::size_t n = image.size();
  std::vector<double> p(kNumClasses * n, 0.0);
  for (std::size_t j = 0; j < s.size(); ++j)
    for (std::size_t v = 0; v < n; ++v) p[bank[s[j].second].mask[v] * n + v] += w[j] / z;
  return p;
}

}  // namespace

TEST_CASE("lattice topology") {
  std::vector<double> D;
  for (int i = 1; i <= 10; ++i) D.push_back(i / 10.0);
  const auto specs = build_lattice(D, {2, 4, 6, 8, 10});
  REQUIRE(specs.size() == D.size() * 5);
  CHECK(specs.front() == ExpertSpec{0.1, 2});
  CHECK(specs[1] == ExpertSpec{0.1, 4});
  CHECK(specs[5] == ExpertSpec{0.2, 2});
  CHECK(specs.back() == ExpertSpec{1.0, 10});
  CHECK(std::is_sorted(specs.begin(), specs.end()));
  CHECK(build_lattice({0.3}, {4}).size() == 1);
  CHECK(build_lattice(D, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}).size() == 100);
  CHECK(build_lattice({0.2, 0.1, 0.2}, {4, 2, 4, 4}) ==
        std::vector<ExpertSpec>{{0.1, 2}, {0.1, 4}, {0.2, 2}, {0.2, 4}});
  CHECK(error_code_of([] { build_lattice({}, {2}); }) == ErrorCode::EmptySet);
  CHECK(error_code_of([] { build_lattice({0.1}, {}); }) == ErrorCode::EmptySet);
  CHECK(to_string(ExpertSpec{0.1, 2}) == "(dg=0.1, alpha=2)");
}

TEST_CASE("bank bookkeeping") {
  auto bank = random_bank(3, 1);
  CHECK(bank->size() == 3);
  CHECK(bank->index_of("S1_ED") == 1);
  CHECK(bank->samples_of("S2") == std::vector<std::size_t>{2});
  CHECK(bank->samples_of("nobody").empty());
  std::mt19937_64 rng(2);
  CHECK(error_code_of([&] { bank->add("S1_ED", "S1", random_phase(rng)); }) == ErrorCode::InvalidArgument);
  const Phase other{random_image(grid(6, 5, 5), rng), random_mask(grid(6, 5, 5), rng)};
  CHECK(error_code_of([&] { bank->add("X", "X", other); }) == ErrorCode::GeometryMismatch);
  Subject s{"P", random_phase(rng), random_phase(rng), Pathology::HCM};
  bank->add_subject(s);
  CHECK(bank->samples_of("P") == std::vector<std::size_t>{3, 4});
  CHECK(bank->index_of("P_ES") == 4);
  bank->compute_pairwise();
  CHECK(bank->pairwise(1, 1) == doctest::Approx(1.0));
  CHECK(bank->pairwise(0, 3) == doctest::Approx(bank->pairwise(3, 0)));
  CHECK(bank->similarity((*bank)[0].image).size() == 5);
}

TEST_CASE("nearest exemplar identity and equal-similarity averaging") {
  auto bank = random_bank(4, 3);
  const auto& s2 = (*bank)[2];
  const auto pm = predict_exemplar(exemplar(1, 0.1, {"S0_ED", "S1_ED", "S2_ED", "S3_ED"}), *bank,
                                   bank->similarity(s2.image));
  CHECK(pm == one_hot(s2.mask));

  // two samples share an image, so their similarities are equal
  std::mt19937_64 rng(4);
  SampleBank twin;
  const auto img = random_image(kGrid, rng);
  const auto m0 = random_mask(kGrid, rng, 0.6), m1 = random_mask(kGrid, rng, 0.6);
  twin.add("A", "A", {img, m0});
  twin.add("B", "B", {img, m1});
  twin.add("C", "C", random_phase(rng));
  const auto avg = predict_exemplar(exemplar(2, 0.05, {"A", "B", "C"}), twin, twin.similarity(img));
  const auto h0 = one_hot(m0), h1 = one_hot(m1);
  for (int c = 0; c < kNumClasses; ++c)
    for (std::size_t v = 0; v < kGrid.voxel_count(); ++v)
      REQUIRE(avg.prob(c, v) == doctest::Approx(0.5 * (h0.prob(c, v) + h1.prob(c, v))));
}

TEST_CASE("exemplar vote matches an independent oracle and is a simplex") {
  auto bank = random_bank(9, 5);
  std::mt19937_64 rng(6);
  std::vector<std::string> ids;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < bank->size(); i += 2) {
    ids.push_back((*bank)[i].id);
    kept.push_back(i);
  }
  for (int k : kNeighborGrid)
    for (double tau : kTemperatureGrid) {
      const auto img = random_image(kGrid, rng);
      const auto pm = predict_exemplar(exemplar(k, tau, ids), *bank, bank->similarity(img));
      check_simplex(pm);
      const auto ref = vote_oracle(*bank, kept, img, k, tau);
      for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(pm.data()[i] == doctest::Approx(ref[i]).epsilon(1e-5));
    }
}

TEST_CASE("duplicating the top sample leaves a k=1 prediction unchanged") {
  auto bank = random_bank(5, 7);
  std::mt19937_64 rng(8);
  const auto img = random_image(kGrid, rng);
  std::vector<std::string> ids{"S0_ED", "S1_ED", "S2_ED", "S3_ED", "S4_ED"};
  const auto sim = bank->similarity(img);
  const auto before = predict_exemplar(exemplar(1, 0.1, ids), *bank, sim);
  const auto top = static_cast<std::size_t>(std::max_element(sim.begin(), sim.end()) - sim.begin());
  bank->add("dup", "dup", {(*bank)[top].image, (*bank)[top].mask});
  ids.push_back("dup");
  const auto after = predict_exemplar(exemplar(1, 0.1, ids), *bank, bank->similarity(img));
  CHECK(after == before);
}

TEST_CASE("training picks the best validation grid point deterministically") {
  auto bank = random_bank(12, 9);
  SIVPlan plan;
  plan.train_ids = {"S1", "S2", "S4", "S5", "S7", "S8", "S10", "S11"};
  plan.val_ids = {"S0", "S3", "S6", "S9"};
  const auto e = train_expert({0.2, 2}, plan, *bank);
  CHECK(e.spec == ExpertSpec{0.2, 2});
  CHECK(e.kind == ExpertKind::Exemplar);
  CHECK(e.sample_ids.size() == 8);
  std::vector<std::size_t> retained, val;
  for (const auto& id : plan.train_ids) retained.push_back(bank->samples_of(id)[0]);
  for (const auto& id : plan.val_ids) val.push_back(bank->samples_of(id)[0]);
  std::sort(retained.begin(), retained.end());
  const auto grid_scores = validation_grid(retained, val, *bank);
  REQUIRE(grid_scores.size() == kNeighborGrid.size() * kTemperatureGrid.size());
  const auto best = std::max_element(grid_scores.begin(), grid_scores.end());
  CHECK(e.val_dice == *best);
  const auto pos = static_cast<std::size_t>(best - grid_scores.begin());
  CHECK(e.k == kNeighborGrid[pos / kTemperatureGrid.size()]);
  CHECK(e.tau == kTemperatureGrid[pos % kTemperatureGrid.size()]);
  for (double s : grid_scores) CHECK(e.val_dice >= s);

  const auto again = train_expert({0.2, 2}, plan, *bank);
  CHECK(again.k == e.k);
  CHECK(again.tau == e.tau);
  CHECK(again.val_dice == e.val_dice);
  CHECK(again.sample_ids == e.sample_ids);
}

TEST_CASE("a single training sample predicts its own mask everywhere") {
  auto bank = random_bank(4, 10);
  SIVPlan plan;
  plan.train_ids = {"S1"};
  plan.val_ids = {"S0", "S2"};
  const auto e = train_expert({0.1, 2}, plan, *bank);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 3; ++i)
    CHECK(predict(e, bank.get(), random_image(kGrid, rng)) == one_hot((*bank)[1].mask));
}

TEST_CASE("training errors") {
  auto bank = random_bank(3, 12);
  SIVPlan plan;
  plan.val_ids = {"S0"};
  CHECK(error_code_of([&] { train_expert({0.1, 2}, plan, *bank); }) == ErrorCode::EmptyTrainSet);
  plan.train_ids = {"nobody"};
  CHECK(error_code_of([&] { train_expert({0.1, 2}, plan, *bank); }) == ErrorCode::InvalidArgument);
  CHECK(error_code_of([&] { predict_exemplar(exemplar(1, 0.1, {}), *bank, bank->similarity((*bank)[0].image)); }) ==
        ErrorCode::EmptyTrainSet);
}

TEST_CASE("external experts read stored maps") {
  const auto dir = temp_dir("external");
  std::mt19937_64 rng(13);
  const auto img = random_image(kGrid, rng);
  const auto e = external_expert({0.3, 4}, dir);
  CHECK(external_map_path(e, "T1") == dir / "T1" / "0.3_4.plv");
  CHECK(error_code_of([&] { predict(e, nullptr, img, "T1"); }) == ErrorCode::MissingExternalMap);
  const auto stored = one_hot(random_mask(kGrid, rng));
  store_volume(external_map_path(e, "T1"), stored);
  CHECK(predict(e, nullptr, img, "T1") == stored);
  const auto wrong = random_image(grid(6, 5, 5), rng);
  CHECK(error_code_of([&] { predict(e, nullptr, wrong, "T1"); }) == ErrorCode::GeometryMismatch);
}

TEST_CASE("fan-out covers every cell in lattice order and names failing cells") {
  auto bank = random_bank(6, 14);
  Lattice lat;
  lat.D = {0.1, 0.2};
  lat.Q = {2, 4};
  lat.bank = bank;
  int i = 0;
  for (const auto& spec : build_lattice(lat.D, lat.Q)) {
    auto e = exemplar(1 + 2 * (i % 3), 0.1, {"S0_ED", "S2_ED", "S3_ED", "S5_ED"});
    e.spec = spec;
    if (i == 1) e.sample_ids = {"S1_ED", "S4_ED"};
    lat.cells.push_back(e);
    ++i;
  }
  std::mt19937_64 rng(15);
  const auto img = random_image(kGrid, rng);
  const auto maps = fan_out(lat, img, "T", 1);
  REQUIRE(maps.size() == 4);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(maps[c].first == lat.cells[c].spec);
    CHECK(maps[c].second == predict(lat.cells[c], bank.get(), img));
  }
  const auto parallel = fan_out(lat, img, "T", 3);
  for (std::size_t c = 0; c < 4; ++c) CHECK(parallel[c].second == maps[c].second);

  Lattice one = lat;
  one.cells.resize(1);
  const auto single = fan_out(one, img);
  REQUIRE(single.size() == 1);
  CHECK(single[0].second == predict(one.cells[0], bank.get(), img));

  auto broken = lat;
  broken.cells[2] = external_expert(lat.cells[2].spec, temp_dir("fan_out"));
  store_volume(external_map_path(broken.cells[2], "T"), one_hot(LabelMask::empty(grid(6, 5, 5))));
  try {
    fan_out(broken, img, "T", 2);
    FAIL("expected GeometryMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::GeometryMismatch);
    CHECK(std::string(e.what()).find(to_string(lat.cells[2].spec)) != std::string::npos);
  }
}

TEST_CASE("lattice training and persistence round trip") {
  auto bank = random_bank(20, 16);
  std::vector<CohortEntry> cohort;
  for (int i = 0; i < 18; ++i) cohort.push_back({"S" + std::to_string(i), 0.05 * i});
  AnchorSet anchors;
  anchors.roles = {{"S18", Pathology::DCM, 0.05, 5, 0}, {"S19", Pathology::DCM, 0.95, 95, 0}};
  const std::vector<double> D{0.1, 0.2};
  const std::vector<int> Q{2, 4};
  std::map<ExpertSpec, SIVPlan> plans;
  for (const auto& s : build_lattice(D, Q)) plans[s] = partition(cohort, anchors, s.delta_gamma, s.alpha);
  const auto lat = train_lattice(D, Q, plans, bank, 1);
  REQUIRE(lat.cells.size() == 4);
  const auto lat3 = train_lattice(D, Q, plans, bank, 3);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(lat.cells[c].spec == build_lattice(D, Q)[c]);
    CHECK(lat3.cells[c].k == lat.cells[c].k);
    CHECK(lat3.cells[c].tau == lat.cells[c].tau);
    CHECK(lat3.cells[c].sample_ids == lat.cells[c].sample_ids);
  }
  plans.erase(ExpertSpec{0.2, 4});
  CHECK(error_code_of([&] { train_lattice(D, Q, plans, bank); }) == ErrorCode::InvalidArgument);

  const auto dir = temp_dir("lattice_io");
  save_lattice(dir, lat);
  const auto back = load_lattice(dir);
  CHECK(back.D == lat.D);
  CHECK(back.Q == lat.Q);
  REQUIRE(back.cells.size() == lat.cells.size());
  std::mt19937_64 rng(17);
  const auto img = random_image(kGrid, rng);
  for (std::size_t c = 0; c < lat.cells.size(); ++c) {
    CHECK(back.cells[c].spec == lat.cells[c].spec);
    CHECK(back.cells[c].k == lat.cells[c].k);
    CHECK(back.cells[c].tau == lat.cells[c].tau);
    CHECK(back.cells[c].val_dice == lat.cells[c].val_dice);
    CHECK(predict(back.cells[c], back.bank.get(), img) == predict(lat.cells[c], lat.bank.get(), img));
  }
  // saving again is byte-stable
  const auto dir2 = temp_dir("lattice_io2");
  save_lattice(dir2, back);
  CHECK(sha256_file(dir / "lattice.json") == sha256_file(dir2 / "lattice.json"));
}
