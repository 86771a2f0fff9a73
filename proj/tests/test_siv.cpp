#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "doctest.h"
#include "pathco/siv.hpp"
#include "test_util.hpp"

using namespace pathco;
using namespace testutil;

namespace {

std::vector<CohortEntry> cohort_of(int n) {
  std::vector<CohortEntry> c;
  for (int i = 0; i < n; ++i) c.push_back({fmt::format("V{:03d}", i), 0.01 * (i + 1)});
  return c;
}

AnchorSet anchors() {
  AnchorSet a;
  a.roles = {{"H1", Pathology::DCM, 0.05, 5, 0.0},
             {"D1", Pathology::DCM, 0.95, 95, 0.0},
             {"H1", Pathology::HCM, 0.05, 5, 0.0},
             {"C1", Pathology::HCM, 0.95, 95, 0.0}};
  return a;
}

std::vector<std::string> ids_at(const std::vector<CohortEntry>& c, std::initializer_list<int> ks) {
  std::vector<std::string> out;
  for (int k : ks) out.push_back(c[k].id);
  return out;
}

}  // namespace

TEST_CASE("ten samples with alpha 2") {
  const auto c = cohort_of(10);
  const auto plan = partition(c, anchors(), 0.1, 2);
  CHECK(plan.stride == 1);
  CHECK(plan.a_max == 9);
  CHECK(plan.val_ids == ids_at(c, {0, 3, 6, 9}));
  auto expected = ids_at(c, {1, 2, 4, 5, 7, 8});
  for (const auto& id : anchors().subject_ids()) expected.push_back(id);
  CHECK(plan.train_ids == expected);
  CHECK(verify_plan(plan, anchors()).empty());
}

TEST_CASE("alpha 1 alternates") {
  const auto c = cohort_of(7);
  const auto plan = partition(c, anchors(), 0.1, 1);
  CHECK(plan.val_ids == ids_at(c, {0, 2, 4, 6}));
  CHECK(std::vector<std::string>(plan.train_ids.begin(), plan.train_ids.begin() + 3) == ids_at(c, {1, 3, 5}));
}

TEST_CASE("stride follows the nearest integer ratio to the base step") {
  const auto c = cohort_of(40);
  CHECK(partition(c, anchors(), 0.3, 1).stride == 3);
  CHECK(partition(c, anchors(), 0.04, 1).stride == 1);
  CHECK(partition(c, anchors(), 0.26, 1).stride == 3);
  const auto plan = partition(c, anchors(), 0.5, 2);
  CHECK(plan.stride == 5);
  REQUIRE(plan.sequence.size() == 8);
  for (std::size_t k = 0; k < plan.sequence.size(); ++k) CHECK(plan.sequence[k].id == c[5 * k].id);
  CHECK(plan.val_ids == std::vector<std::string>{c[0].id, c[15].id, c[30].id});
}

TEST_CASE("set sizes follow the block count for the whole lattice") {
  const auto c = cohort_of(120);
  const auto a = anchors();
  for (int d = 1; d <= 10; ++d) {
    for (int alpha : {2, 4, 6, 8, 10}) {
      const auto plan = partition(c, a, 0.1 * d, alpha);
      CHECK(plan.a_max + 1 == static_cast<int>(plan.sequence.size()));
      CHECK(plan.sequence.size() == (c.size() + d - 1) / d);
      const std::size_t nval = plan.a_max / (alpha + 1) + 1;
      CHECK(plan.val_ids.size() == nval);
      CHECK(plan.train_ids.size() == plan.sequence.size() - nval + a.size());
      CHECK(verify_plan(plan, a).empty());
      std::set<std::string> val(plan.val_ids.begin(), plan.val_ids.end());
      for (std::size_t k = 0; k < plan.sequence.size(); ++k)
        CHECK(val.count(plan.sequence[k].id) == (k % (alpha + 1) == 0 ? 1u : 0u));
    }
  }
}

TEST_CASE("the sequence must hold one full block past the first validation element") {
  const auto c = cohort_of(5);
  const auto ok = partition(c, anchors(), 0.1, 3);
  CHECK(ok.val_ids == ids_at(c, {0, 4}));
  CHECK(error_code_of([&] { partition(c, anchors(), 0.1, 4); }) == ErrorCode::StepTooCoarse);
  CHECK(error_code_of([&] { partition(c, anchors(), 0.3, 1); }) == ErrorCode::StepTooCoarse);
  CHECK(partition(c, anchors(), 0.2, 1).val_ids == ids_at(c, {0, 4}));
}

TEST_CASE("partition errors") {
  CHECK(error_code_of([] { partition({}, anchors(), 0.1, 2); }) == ErrorCode::EmptyCohort);
  const auto c = cohort_of(10);
  CHECK(error_code_of([&] { partition(c, anchors(), 0.1, 0); }) == ErrorCode::InvalidArgument);
  CHECK(error_code_of([&] { partition(c, anchors(), 0.0, 2); }) == ErrorCode::InvalidArgument);
  CHECK(error_code_of([&] { partition(c, anchors(), -0.1, 2); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("plans are deterministic") {
  const auto c = cohort_of(50);
  const auto a = partition(c, anchors(), 0.2, 4);
  const auto b = partition(c, anchors(), 0.2, 4);
  CHECK(a.train_ids == b.train_ids);
  CHECK(a.val_ids == b.val_ids);
}

TEST_CASE("verify_plan reports injected violations") {
  const auto c = cohort_of(12);
  const auto a = anchors();
  const auto plan = partition(c, a, 0.1, 2);

  auto leaked = plan;
  leaked.val_ids.push_back("D1");
  auto v = verify_plan(leaked, a);
  REQUIRE(!v.empty());
  CHECK(std::any_of(v.begin(), v.end(), [](const SivViolation& x) { return x.property == SivProperty::AnchorInValidation; }));

  auto shared = plan;
  shared.train_ids.push_back(plan.val_ids[1]);
  v = verify_plan(shared, a);
  REQUIRE(v.size() == 1);
  CHECK(v[0].property == SivProperty::TrainValOverlap);

  auto reordered = plan;
  std::swap(reordered.sequence[2].gamma, reordered.sequence[3].gamma);  // index 3 is validation
  v = verify_plan(reordered, a);
  REQUIRE(v.size() == 1);
  CHECK(v[0].property == SivProperty::BlockOrdering);
  CHECK(v[0].detail.find(c[3].id) != std::string::npos);
}

TEST_CASE("cohort entries keep the merged order") {
  std::vector<VirtualPatient> vps(3);
  vps[0].id = "b";
  vps[0].gamma = 0.2;
  vps[1].id = "a";
  vps[1].gamma = 0.2;
  vps[2].id = "c";
  vps[2].gamma = 0.1;
  VirtualCohort cohort;
  cohort.patients = vps;
  const auto entries = cohort_entries(merge_cohorts({cohort}));
  REQUIRE(entries.size() == 3);
  CHECK(entries[0].id == "c");
  CHECK(entries[1].id == "a");
  CHECK(entries[2].id == "b");
}
