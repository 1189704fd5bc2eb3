#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "dbm/error.hpp"
#include "dbm/prep.hpp"
#include "dbm/rng.hpp"

using namespace dbm;
using namespace dbm::prep;

namespace {

// Eq. (1) coded independently: integer arithmetic on millimetres is not used
// because the formula is stated over metres.
int depth_reference(double d) {
  if (d == 0.0) return 0;
  double ratio = 0.5 / d;
  if (ratio > 1.0) ratio = 1.0;
  return static_cast<int>(std::floor(255.0 * ratio));
}

// Chunk lengths by repeated subtraction, sharing no code with split_clip.
std::vector<std::int64_t> chunk_oracle(std::int64_t len, std::int64_t span) {
  if (len <= span) return {len};
  std::int64_t k = static_cast<std::int64_t>(std::floor(static_cast<double>(len) / span + 0.5));
  std::vector<std::int64_t> out(k, 0);
  for (std::int64_t left = len, i = 0; left > 0; --left, i = (i + 1) % k) ++out[i];
  return out;
}

DatasetManifest counts_fixture(const std::vector<int>& counts, int drivers) {
  DatasetManifest m;
  m.label_set.clear();
  for (std::size_t c = 0; c < counts.size(); ++c) m.label_set.push_back({static_cast<int>(c), "c" + std::to_string(c)});
  int n = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (int k = 0; k < counts[c]; ++k, ++n) {
      ClipRecord r;
      r.clip_id = "clip" + std::to_string(n);
      r.driver_id = "drv" + std::to_string(n % drivers);
      r.label = static_cast<int>(c);
      r.frame_count = 40;
      r.source(Modality::Rgb) = "v.mp4";
      m.records.push_back(r);
    }
  }
  return m;
}

}  // namespace

TEST_CASE("depth quantization examples") {
  CHECK(quantize_depth(0.0) == 0);
  CHECK(quantize_depth(0.5) == 255);
  CHECK(quantize_depth(0.25) == 255);
  CHECK(quantize_depth(2.0) == 63);
  CHECK(quantize_depth(1.0) == 127);
  CHECK_THROWS_AS(quantize_depth(-0.1), DomainError);
  CHECK_THROWS_AS(quantize_depth(std::nan("")), DomainError);
}

TEST_CASE("depth quantization matches the reference on random depths") {
  Rng rng(11);
  for (int i = 0; i < 100000; ++i) {
    const double d = uniform(rng, 0.0, 10.0);
    REQUIRE(quantize_depth(d) == depth_reference(d));
  }
}

TEST_CASE("depth quantization is monotone non-increasing") {
  int prev = 255;
  for (int mm = 500; mm <= 10000; ++mm) {
    const int v = quantize_depth(mm / 1000.0);
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("quantize_depth_frame maps every pixel") {
  DepthFrameMetric d(4, 2, 1);
  d.at(0, 0, 1) = 0.5f;
  d.at(0, 1, 3) = 2.0f;
  auto q = quantize_depth_frame(d);
  CHECK(q.at(0, 0, 0) == 0);
  CHECK(q.at(0, 0, 1) == 255);
  CHECK(q.at(0, 1, 3) == 63);
}

TEST_CASE("resize_frame normalizes resolution") {
  CHECK(resize_frame(FrameTensor(640, 360, 3, 7)) == FrameTensor(640, 360, 3, 7));
  auto rgb = resize_frame(FrameTensor(1920, 1080, 3, 9));
  CHECK(rgb.width() == 640);
  CHECK(rgb.height() == 360);
  CHECK(rgb.channels() == 3);
  CHECK(rgb.at(2, 100, 100) == 9);
  auto ir = resize_frame(FrameTensor(1280, 720, 1));
  CHECK(ir.width() == 640);
  CHECK(ir.channels() == 1);
  CHECK_THROWS_AS(resize_frame(FrameTensor()), DomainError);
}

TEST_CASE("split_clip examples") {
  WindowingPolicy p;
  CHECK(split_clip({0, 30}, p) == std::vector<FrameRange>{{0, 30}});
  CHECK(split_clip({0, 100}, p) == std::vector<FrameRange>{{0, 50}, {50, 50}});
  CHECK(split_clip({0, 120}, p) == std::vector<FrameRange>{{0, 60}, {60, 60}});
  CHECK(split_clip({10, 50}, p) == std::vector<FrameRange>{{10, 50}});
  CHECK_THROWS_AS(split_clip({0, 0}, p), DomainError);
}

TEST_CASE("split_clip chunks are contiguous, covering and near equal") {
  Rng rng(5);
  WindowingPolicy p;
  for (int i = 0; i < 2000; ++i) {
    const auto len = uniform_int(rng, 1, 500);
    const auto first = uniform_int(rng, 0, 1000);
    const auto chunks = split_clip({first, len}, p);
    std::vector<std::int64_t> lengths;
    std::int64_t at = first;
    for (const auto& c : chunks) {
      REQUIRE(c.first == at);
      at = c.end();
      lengths.push_back(c.count);
    }
    REQUIRE(at == first + len);
    auto [lo, hi] = std::minmax_element(lengths.begin(), lengths.end());
    REQUIRE(*hi - *lo <= 1);
    auto expected = chunk_oracle(len, 50);
    std::sort(lengths.begin(), lengths.end());
    std::sort(expected.begin(), expected.end());
    REQUIRE(lengths == expected);
  }
}

TEST_CASE("split_clips renames chunks and offsets locators") {
  DatasetManifest m;
  ClipRecord r;
  r.clip_id = "c";
  r.driver_id = "d";
  r.frame_count = 100;
  r.source(Modality::Rgb) = "frames/c/rgb#5";
  r.source(Modality::Ir) = "frames/c/ir";
  m.records.push_back(r);
  auto out = split_clips(m, {});
  REQUIRE(out.records.size() == 2);
  CHECK(out.records[0].clip_id == "c_s0");
  CHECK(out.records[1].clip_id == "c_s1");
  CHECK(out.records[1].source(Modality::Rgb) == "frames/c/rgb#55");
  CHECK(out.records[1].source(Modality::Ir) == "frames/c/ir#50");
  CHECK(out.records[1].source(Modality::Depth).empty());
  CHECK(out.records[1].frame_count == 50);
}

TEST_CASE("balance_classes reaches the median") {
  auto m = counts_fixture({970, 2768, 1886}, 10);
  auto b = balance_classes(m, 3);
  for (auto& [label, n] : class_histogram(b)) CHECK(n == 1886);
  CHECK(serialize_manifest(b) == serialize_manifest(balance_classes(m, 3)));
  CHECK(serialize_manifest(b) != serialize_manifest(balance_classes(m, 4)));
}

TEST_CASE("balance_classes keeps balanced input and every original of small classes") {
  auto m = counts_fixture({5, 5, 5}, 3);
  CHECK(class_histogram(balance_classes(m, 1)) == class_histogram(m));

  auto skewed = counts_fixture({2, 6, 4, 9}, 3);
  auto b = balance_classes(skewed, 1);
  for (auto& [label, n] : class_histogram(b)) CHECK(n == 5);
  std::set<std::string> ids;
  for (auto& r : b.records) ids.insert(r.clip_id);
  CHECK(ids.size() == b.records.size());
  for (auto& r : skewed.records)
    if (r.label == 0) CHECK(ids.contains(r.clip_id));
}

TEST_CASE("balance_classes rejects empty classes") {
  auto m = counts_fixture({3, 0, 2}, 2);
  try {
    balance_classes(m, 0);
    FAIL("expected a balance error");
  } catch (const BalanceError& e) {
    CHECK(std::string(e.what()).find("class 1") != std::string::npos);
  }
}

TEST_CASE("split ratios parse") {
  auto r = SplitRatios::parse("4:1:1");
  CHECK(r.train == 4.0);
  CHECK(r.val == 1.0);
  CHECK(r.test == 1.0);
  CHECK_THROWS(SplitRatios::parse("4:1"));
}

TEST_CASE("split_by_driver: one driver per partition") {
  auto m = counts_fixture({3, 3, 3}, 3);
  auto s = split_by_driver(m, SplitRatios::parse("1:1:1"), 0);
  auto drivers = drivers_by_partition(s);
  CHECK(drivers[Partition::Train].size() == 1);
  CHECK(drivers[Partition::Val].size() == 1);
  CHECK(drivers[Partition::Test].size() == 1);
}

TEST_CASE("split_by_driver: 37 drivers land close to 24:7:6") {
  auto m = counts_fixture(std::vector<int>(13, 74), 37);
  auto s = split_by_driver(m, {}, 9);
  auto drivers = drivers_by_partition(s);
  CHECK(std::abs(static_cast<int>(drivers[Partition::Train].size()) - 24) <= 1);
  CHECK(std::abs(static_cast<int>(drivers[Partition::Val].size()) - 7) <= 1);
  CHECK(std::abs(static_cast<int>(drivers[Partition::Test].size()) - 6) <= 1);
}

TEST_CASE("split_by_driver never shares drivers") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> counts(4);
    for (auto& c : counts) c = static_cast<int>(uniform_int(rng, 5, 60));
    const int drivers = static_cast<int>(uniform_int(rng, 3, 20));
    auto s = split_by_driver(counts_fixture(counts, drivers), {}, rng());
    CHECK_NOTHROW(validate(s));
    std::set<std::string> seen;
    for (auto& [p, ds] : drivers_by_partition(s)) {
      CHECK(p != Partition::Unassigned);
      CHECK_FALSE(ds.empty());
      for (auto& d : ds) CHECK(seen.insert(d).second);
    }
  }
}

TEST_CASE("split_by_driver needs enough drivers") {
  CHECK_THROWS_AS(split_by_driver(counts_fixture({4, 4}, 2), {}, 0), SplitError);
}

TEST_CASE("prepare splits, balances and partitions") {
  DatasetManifest m = counts_fixture({6, 9, 12}, 6);
  for (std::size_t i = 0; i < m.records.size(); ++i) m.records[i].frame_count = i % 3 == 0 ? 100 : 40;
  PrepOptions o;
  o.seed = 4;
  auto r = prepare(m, o);
  auto hist = class_histogram(r.manifest);
  CHECK(hist[0] == hist[1]);
  CHECK(hist[1] == hist[2]);
  for (auto& rec : r.manifest.records) {
    CHECK(rec.frame_count <= 50);
    CHECK(rec.partition != Partition::Unassigned);
  }
  CHECK(r.report.counts_before.at(0) == 6);
  CHECK(r.report.clips_per_partition.size() == 3);
  CHECK(r.report.missing_modalities.at(Modality::Ir) == r.manifest.records.size());
  auto j = to_json(r.report);
  CHECK(j.contains("counts_after"));
  CHECK(serialize_manifest(prepare(m, o).manifest) == serialize_manifest(r.manifest));
}
