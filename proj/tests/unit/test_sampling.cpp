#include "doctest.h"

#include <cmath>

#include "dbm/error.hpp"
#include "dbm/imgproc.hpp"
#include "dbm/rng.hpp"
#include "dbm/sampling.hpp"

using namespace dbm;
using namespace dbm::sampling;

namespace {

// Walks frames one by one and keeps the last one whose position does not pass
// the segment midpoint.
std::vector<int> midpoint_oracle(int len, int n) {
  std::vector<int> out;
  for (int j = 0; j < n; ++j) {
    const double mid = (j + 0.5) * len / n;
    int pick = 0;
    for (int f = 0; f < len; ++f)
      if (f <= mid) pick = f;
    out.push_back(pick);
  }
  return out;
}

std::vector<int> range_step(int start, int count, int step) {
  std::vector<int> v;
  for (int i = 0; i < count; ++i) v.push_back(start + i * step);
  return v;
}

}  // namespace

TEST_CASE("center sampling examples") {
  CHECK(sample_segments(50, {4, SampleMode::CenterEval}, 0) == std::vector<int>{6, 18, 31, 43});
  CHECK(sample_segments(4, {4, SampleMode::CenterEval}, 0) == std::vector<int>{0, 1, 2, 3});
  CHECK(sample_segments(1, {3, SampleMode::CenterEval}, 0) == std::vector<int>{0, 0, 0});
  CHECK_THROWS_AS(sample_segments(0, {}, 0), DomainError);
}

TEST_CASE("center sampling matches the interval enumerator") {
  for (int len = 1; len <= 200; ++len)
    for (int n : {1, 2, 3, 4, 5, 8, 16}) REQUIRE(sample_segments(len, {n, SampleMode::CenterEval}, 0) == midpoint_oracle(len, n));
}

TEST_CASE("random sampling stays inside each segment") {
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const int len = static_cast<int>(uniform_int(rng, 1, 300));
    const int n = static_cast<int>(uniform_int(rng, 1, 8));
    const auto seed = rng();
    const auto idx = sample_segments(len, {n, SampleMode::RandomTrain}, seed);
    REQUIRE(idx.size() == static_cast<std::size_t>(n));
    CHECK(idx == sample_segments(len, {n, SampleMode::RandomTrain}, seed));
    for (int j = 0; j < n; ++j) {
      const double lo = static_cast<double>(j) * len / n;
      const double hi = static_cast<double>(j + 1) * len / n;
      REQUIRE(idx[j] >= 0);
      REQUIRE(idx[j] < len);
      if (len >= n) {
        REQUIRE(idx[j] >= lo);
        REQUIRE(idx[j] < hi);
      } else {
        REQUIRE(idx[j] >= std::floor(lo));
        REQUIRE(idx[j] <= std::floor(hi));
      }
    }
  }
}

TEST_CASE("3D clip sampling") {
  ClipSpec3D spec;
  CHECK(sample_clip_3d(50, spec, 0) == range_step((50 - 32) / 2, 16, 2));
  CHECK(sample_clip_3d(50, spec, 0).front() == 9);
  CHECK(sample_clip_3d(32, spec, 0) == range_step(0, 16, 2));
  spec.mode = SampleMode::RandomTrain;
  CHECK(sample_clip_3d(32, spec, 123) == range_step(0, 16, 2));
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto idx = sample_clip_3d(80, spec, seed);
    REQUIRE(idx.size() == 16);
    CHECK(idx.front() >= 0);
    CHECK(idx.back() == idx.front() + 30);
    CHECK(idx.back() < 80);
  }
  auto padded = sample_clip_3d(10, {}, 0);
  auto loop = loop_pad(32, 10);
  for (int i = 0; i < 16; ++i) CHECK(padded[i] == loop[2 * i]);
}

TEST_CASE("loop padding") {
  CHECK(loop_pad(16, 10) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1, 2, 3, 4, 5});
  CHECK(loop_pad(5, 5) == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(loop_pad(7, 3) == std::vector<int>{0, 1, 2, 0, 1, 2, 0});
}

TEST_CASE("eval crop is a centered square") {
  auto out = augment_spatial(FrameTensor(640, 360, 3, 5), false, 224, 0);
  CHECK(out.width() == 224);
  CHECK(out.height() == 224);
  CHECK(out.channels() == 3);
  CHECK(eval_crop(640, 360, {}) == Rect{140, 0, 360, 360});
}

TEST_CASE("train crops are deterministic per seed and stay inside the frame") {
  FrameTensor f(640, 360, 1);
  for (int y = 0; y < 360; ++y)
    for (int x = 0; x < 640; ++x) f.at(0, y, x) = static_cast<std::uint8_t>((x * 7 + y * 3) % 251);
  CHECK(augment_spatial(f, true, 112, 42) == augment_spatial(f, true, 112, 42));

  Rng rng(8);
  ScaleJitter j;
  for (int i = 0; i < 500; ++i) {
    auto r = train_crop(640, 360, 112, j, rng);
    REQUIRE(r.x >= 0);
    REQUIRE(r.y >= 0);
    REQUIRE(r.x + r.width <= 640);
    REQUIRE(r.y + r.height <= 360);
    const double ratio = static_cast<double>(r.width) / r.height;
    REQUIRE(ratio <= 1.0 / 0.75 + 1e-9);
    REQUIRE(ratio >= 0.75 - 1e-9);
  }
}

TEST_CASE("oversized crops are rejected") {
  CHECK_THROWS_AS(augment_spatial(FrameTensor(100, 80, 3), false, 224, 0), DomainError);
  CHECK_NOTHROW(augment_spatial(FrameTensor(300, 80, 3), false, 224, 0));
}

TEST_CASE("identity crop_resize reproduces the source") {
  FrameTensor f(9, 5, 2);
  for (std::size_t i = 0; i < f.data().size(); ++i) f.data()[i] = static_cast<std::uint8_t>(i * 13);
  CHECK(crop_resize(f, {0, 0, 9, 5}, 9, 5) == f);
  CHECK(crop_resize(f, {0, 0, 9, 5}, 9, 5, Interpolation::Nearest) == f);
}
