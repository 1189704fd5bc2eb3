#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "dbm/error.hpp"
#include "dbm/manifest.hpp"

using namespace dbm;

namespace {

ClipRecord make_clip(std::string id, std::string driver, int label, int frames = 50) {
  ClipRecord r;
  r.clip_id = std::move(id);
  r.driver_id = std::move(driver);
  r.label = label;
  r.frame_count = frames;
  r.source(Modality::Rgb) = "frames/" + r.clip_id + "/rgb";
  r.source(Modality::Ir) = "frames/" + r.clip_id + "/ir";
  r.source(Modality::Depth) = "frames/" + r.clip_id + "/depth";
  return r;
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "dbm_test_manifest";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("default label set has 13 dense classes") {
  auto labels = default_label_set();
  REQUIRE(labels.size() == 13);
  for (int i = 0; i < 13; ++i) CHECK(labels[i].id == i);
}

TEST_CASE("empty manifest is valid") {
  DatasetManifest m;
  CHECK_NOTHROW(validate(m));
  CHECK(m.records.empty());
  CHECK(m.num_classes() == 13);
  auto h = class_histogram(m);
  CHECK(h.size() == 13);
  for (auto& [label, n] : h) CHECK(n == 0);
}

TEST_CASE("single record survives parse") {
  DatasetManifest m;
  m.records.push_back(make_clip("c1", "d1", 0));
  auto back = parse_manifest(serialize_manifest(m));
  REQUIRE(back.records.size() == 1);
  CHECK(back == m);
  CHECK_NOTHROW(validate(back));
}

TEST_CASE("duplicate clip ids are rejected") {
  DatasetManifest m;
  m.records.push_back(make_clip("c1", "d1", 0));
  m.records.push_back(make_clip("c1", "d2", 1));
  CHECK_THROWS_AS(validate(m), IntegrityError);
  CHECK_THROWS_AS(parse_manifest(serialize_manifest(m)), IntegrityError);
}

TEST_CASE("unknown label is rejected") {
  DatasetManifest m;
  m.records.push_back(make_clip("c1", "d1", 13));
  CHECK_THROWS_AS(validate(m), IntegrityError);
}

TEST_CASE("driver in two partitions is rejected") {
  DatasetManifest m;
  auto a = make_clip("c1", "d1", 0);
  auto b = make_clip("c2", "d1", 1);
  a.partition = Partition::Train;
  b.partition = Partition::Test;
  m.records = {a, b};
  CHECK_THROWS_AS(validate(m), IntegrityError);
}

TEST_CASE("malformed text reports the line") {
  CHECK_THROWS_AS(parse_manifest("not a manifest\n"), SchemaError);
  DatasetManifest m;
  m.records.push_back(make_clip("c1", "d1", 0));
  auto text = serialize_manifest(m);
  text += "c2|d1|zero|50|30|unassigned|||\n";
  try {
    parse_manifest(text, "fixture");
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("fixture") != std::string::npos);
  }
}

TEST_CASE("save then load is the identity") {
  DatasetManifest m;
  for (int d = 0; d < 37; ++d) {
    for (int k = 0; k < 2; ++k) {
      auto r = make_clip("d" + std::to_string(d) + "_c" + std::to_string(k), "driver" + std::to_string(d),
                         (d + k) % 13, 20 + d);
      r.partition = d < 24 ? Partition::Train : d < 31 ? Partition::Val : Partition::Test;
      m.records.push_back(r);
    }
  }
  m.metadata["seed"] = "7";
  auto path = temp_file("roundtrip.txt");
  save_manifest(m, path);
  CHECK(load_manifest(path) == m);
  CHECK(drivers_by_partition(m)[Partition::Train].size() == 24);
}

TEST_CASE("unicode and separators survive the round trip") {
  DatasetManifest m;
  m.records.push_back(make_clip("clip|1", "Jürgen Øster 運転手", 3));
  m.records[0].source(Modality::Ir) = "dir with\\backslash/and|pipe";
  m.metadata["note"] = "line\nbreak";
  auto path = temp_file("unicode.txt");
  save_manifest(m, path);
  CHECK(load_manifest(path) == m);
}

TEST_CASE("unwritable path is an io error") {
  DatasetManifest m;
  CHECK_THROWS_AS(save_manifest(m, "/nonexistent_dir/for/sure/m.txt"), IoError);
  CHECK_THROWS_AS(load_manifest("/nonexistent_dir/for/sure/m.txt"), IoError);
}

TEST_CASE("class histogram counts records") {
  DatasetManifest m;
  m.records = {make_clip("a", "d", 0), make_clip("b", "d", 0), make_clip("c", "d", 0), make_clip("e", "d", 1)};
  auto h = class_histogram(m);
  CHECK(h[0] == 3);
  CHECK(h[1] == 1);
  for (int c = 2; c < 13; ++c) CHECK(h[c] == 0);
}

TEST_CASE("missing modalities are reported, not filled") {
  DatasetManifest m;
  m.records = {make_clip("a", "d", 0), make_clip("b", "d", 1)};
  m.records[1].source(Modality::Depth).clear();
  auto missing = missing_modalities(m);
  CHECK(missing[Modality::Depth] == std::vector<std::string>{"b"});
  CHECK(missing[Modality::Rgb].empty());
  auto back = parse_manifest(serialize_manifest(m));
  CHECK_FALSE(back.records[1].has(Modality::Depth));
}

TEST_CASE("locators carry an optional first frame") {
  auto l = Locator::parse("frames/x/rgb#120");
  CHECK(l.path == "frames/x/rgb");
  CHECK(l.first_frame == 120);
  CHECK(Locator::parse(l.str()) == l);
  auto plain = Locator::parse("video.mp4");
  CHECK(plain.first_frame == 0);
  CHECK(plain.str() == "video.mp4");
}

TEST_CASE("partition and modality names parse back") {
  for (auto p : {Partition::Unassigned, Partition::Train, Partition::Val, Partition::Test})
    CHECK(parse_partition(to_string(p)) == p);
  for (auto m : kAllModalities) CHECK(parse_modality(to_string(m)) == m);
}
