#include "pathco/preprocess.hpp"
#include "test_util.hpp"

using namespace pathco;
using namespace testutil;

namespace {

Subject blob_subject(const Geometry& g, double lo = 0.1, double hi = 0.9) {
  auto f = [](int x, int y, int z) { return x >= 4 && x < 12 && y >= 5 && y < 10 && z >= 1 && z < 4 ? 3 : 0; };
  Subject s;
  s.id = "S";
  const auto m = mask_from(g, f);
  const auto img = image_from(g, [&](int x, int y, int z) { return f(x, y, z) ? hi : lo + 0.01 * (x % 3); });
  s.ed = {img, m};
  s.es = {img, m};
  return s;
}

}  // namespace

TEST_CASE("default preprocessing yields 256x256x16 output") {
  const Geometry g{{40, 36, 10}, {1.2, 1.2, 8.0}};
  const auto s = blob_subject(g);
  const auto out = preprocess(s, {});
  CHECK(out.ed.image.dims() == Dims{256, 256, 16});
  CHECK(out.es.mask.dims() == Dims{256, 256, 16});
  CHECK(out.ed.mask.count(Label::Pool) > 0);
  float lo = 1, hi = 0;
  for (float v : out.ed.image.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo == 0.0f);
  CHECK(hi == 1.0f);
}

TEST_CASE("identity spec on a normalized subject is voxelwise identical") {
  const Geometry g{{16, 15, 5}, {1.5, 1.5, 4.0}};
  auto f = [](int, int, int) { return 3; };
  Subject s;
  s.id = "I";
  const auto m = mask_from(g, f);
  const auto img = image_from(g, [](int x, int y, int z) { return (x + y + z) == 0 ? 0.0 : (x * 7 + y * 3 + z) % 11 == 0 ? 1.0 : 0.37; });
  s.ed = {img, m};
  s.es = {img, m};
  PreprocessSpec spec{1.5, 0.0, {16, 15, 5}};
  const auto out = preprocess(s, spec);
  CHECK(out.ed.image == img);
  CHECK(out.ed.mask == m);
  const auto again = preprocess(out, spec);
  CHECK(again.es.image == out.es.image);
  CHECK(again.es.mask == out.es.mask);
}

TEST_CASE("constant image normalizes to zeros") {
  const Geometry g{{12, 12, 4}, {1.5, 1.5, 5.0}};
  auto s = blob_subject(g);
  s.ed.image = VoxelGrid::filled(g, 0.6f);
  const auto out = preprocess(s, {1.5, 0.2, {20, 20, 4}});
  for (float v : out.ed.image.values()) CHECK(v == 0.0f);
}

TEST_CASE("empty foreground cannot be cropped") {
  const Geometry g = grid(8, 8, 3);
  Subject s;
  s.id = "E";
  s.ed = {VoxelGrid::filled(g, 0.2f), LabelMask::empty(g)};
  s.es = s.ed;
  CHECK(error_code_of([&] { preprocess(s, {}); }) == ErrorCode::EmptyMask);
}
