#include "doctest.h"

#include <filesystem>
#include <set>

#include "dbm/error.hpp"
#include "dbm/framestore.hpp"
#include "dbm/prep.hpp"
#include "dbm/synth.hpp"

using namespace dbm;
using namespace dbm::synth;

TEST_CASE("generate counts clips and drivers") {
  SynthSpec spec;
  spec.n_classes = 2;
  spec.drivers = 3;
  spec.clips_per_driver_per_class = 2;
  auto m = generate(spec);
  CHECK(m.records.size() == 12);
  CHECK(m.num_classes() == 2);
  std::set<std::string> drivers;
  for (auto& r : m.records) {
    drivers.insert(r.driver_id);
    for (auto mod : kAllModalities) CHECK(SynthFrameStore::is_synthetic(r.source(mod)));
  }
  CHECK(drivers.size() == 3);
  for (auto& [label, n] : class_histogram(m)) CHECK(n == 6);
  CHECK(SynthSpec::from_metadata(m.metadata) == spec);
}

TEST_CASE("spec validation") {
  SynthSpec spec;
  spec.n_classes = 1;
  CHECK_THROWS(spec.validate());
  spec = {};
  spec.drivers = 0;
  CHECK_THROWS(spec.validate());
}

TEST_CASE("rendering is deterministic") {
  SynthSpec spec;
  spec.seed = 4;
  Renderer a(spec), b(spec);
  auto plan = plan_clip(spec, 5);
  for (auto mod : kAllModalities) {
    CHECK(a.render(plan, mod, 10) == b.render(plan, mod, 10));
    CHECK(a.render(plan, mod, 10) == a.render(plan, mod, 10));
  }
  CHECK(serialize_manifest(generate(spec)) == serialize_manifest(generate(spec)));
  spec.seed = 5;
  CHECK(a.render(plan, Modality::Rgb, 10) != Renderer(spec).render(plan_clip(spec, 5), Modality::Rgb, 10));
}

TEST_CASE("frames have prep resolution and channel counts") {
  SynthSpec spec;
  Renderer r(spec);
  auto plan = plan_clip(spec, 0);
  auto rgb = r.render(plan, Modality::Rgb, 0);
  CHECK(rgb.width() == 640);
  CHECK(rgb.height() == 360);
  CHECK(rgb.channels() == 3);
  CHECK(r.render(plan, Modality::Ir, 0).channels() == 1);
  CHECK(r.render(plan, Modality::Depth, 0).channels() == 1);
}

TEST_CASE("depth frames are the quantized metric depth") {
  SynthSpec spec;
  Renderer r(spec);
  for (int i : {0, 7, 30}) {
    auto plan = plan_clip(spec, i);
    for (int f : {0, plan.frame_count / 2}) {
      auto metric = r.render_depth(plan, f);
      CHECK(r.render(plan, Modality::Depth, f) == prep::quantize_depth_frame(metric));
    }
  }
}

TEST_CASE("class geometry") {
  CHECK(class_directions(13) == 7);
  CHECK(class_directions(4) == 2);
  CHECK(class_reach(0, 13) == kReachRadius);
  CHECK(class_reach(7, 13) == kShortReachRadius);
  CHECK(class_angle(7, 13) == class_angle(0, 13));
  CHECK(class_angle(1, 13) != class_angle(0, 13));
}

TEST_CASE("the hand starts at home, reaches out and returns") {
  SynthSpec spec;
  Renderer r(spec);
  for (int i = 0; i < 20; ++i) {
    auto plan = plan_clip(spec, i);
    double peak = 0.0;
    for (int f = 0; f < plan.frame_count; ++f) {
      auto [x, y] = r.hand_position(plan, f);
      peak = std::max(peak, std::hypot(x - kHomeX, y - kHomeY));
    }
    CHECK(peak <= plan.target_radius + 1e-9);
    CHECK(peak >= 0.5 * plan.target_radius);
    CHECK(plan.onset + plan.active <= 1.0 + 1e-12);
  }
}

TEST_CASE("oracle recovers the generating class") {
  SynthSpec spec;
  spec.drivers = 8;
  spec.clips_per_driver_per_class = 1;
  spec.seed = 12;
  auto m = generate(spec);
  SynthFrameStore store(spec);
  for (auto mod : {Modality::Rgb, Modality::Ir, Modality::Depth}) {
    int correct = 0;
    for (auto& r : m.records) correct += oracle_classify(store, r, mod, spec.n_classes) == r.label;
    CHECK(static_cast<double>(correct) / m.records.size() >= 0.95);
  }
}

TEST_CASE("oracle rejects black clips") {
  std::vector<FrameTensor> black(10, FrameTensor(640, 360, 3, 0));
  CHECK(oracle_classify(black, Modality::Rgb, 13) == kRejectLabel);
}

TEST_CASE("split clips address their part of the original") {
  SynthSpec spec;
  spec.duration_mean = 120;
  spec.duration_sd = 1;
  auto m = generate(spec);
  auto split = prep::split_clips(m, {});
  SynthFrameStore store(spec);
  const auto& original = m.records.front();
  REQUIRE(split.records.size() > m.records.size());
  const auto& second = split.records[1];
  REQUIRE(second.clip_id == original.clip_id + "_s1");
  const auto offset = Locator::parse(second.source(Modality::Rgb)).first_frame;
  CHECK(store.load(second, Modality::Rgb, 3) == store.load(original, Modality::Rgb, static_cast<int>(offset) + 3));
}

TEST_CASE("materialized frames read back identically") {
  SynthSpec spec;
  spec.n_classes = 2;
  spec.drivers = 1;
  spec.clips_per_driver_per_class = 1;
  spec.duration_mean = 10;
  spec.duration_sd = 0;
  auto m = generate(spec);
  SynthFrameStore synth_store(spec);
  auto dir = std::filesystem::temp_directory_path() / "dbm_test_materialize";
  std::filesystem::remove_all(dir);
  auto disk_manifest = materialize(m, synth_store, dir);
  REQUIRE(disk_manifest.records.size() == m.records.size());
  DiskFrameStore disk(dir);
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    for (auto mod : kAllModalities) {
      CHECK(disk.load(disk_manifest.records[i], mod, 4) == synth_store.load(m.records[i], mod, 4));
    }
  }
}
