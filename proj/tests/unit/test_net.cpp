#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "dbm/error.hpp"
#include "dbm/framestore.hpp"
#include "dbm/net.hpp"
#include "dbm/prep.hpp"
#include "dbm/synth.hpp"

using namespace dbm;
using namespace dbm::net;

namespace {

ModelConfig small_config(InputModality modality = InputModality::Rgb, int classes = 4) {
  ModelConfig cfg;
  cfg.base.family = "tiny-2D";
  cfg.base.input_size = 56;
  cfg.base.feature_dim = 16;
  cfg.modality = modality;
  cfg.base.input_channels = channels(modality);
  cfg.num_classes = classes;
  cfg.hidden = 8;
  return cfg;
}

nn::Tensor random_input(const nn::Shape& s, std::uint64_t seed) {
  Rng rng(seed);
  nn::Tensor t(s);
  for (auto& v : t.data) v = static_cast<float>(uniform(rng, -1, 1));
  return t;
}

struct Corpus {
  synth::SynthSpec spec;
  DatasetManifest manifest;
  std::unique_ptr<FrameStore> store;
};

Corpus small_corpus() {
  Corpus c;
  c.spec.n_classes = 4;
  c.spec.drivers = 6;
  c.spec.clips_per_driver_per_class = 2;
  c.spec.seed = 5;
  prep::PrepOptions o;
  o.seed = 5;
  c.manifest = prep::prepare(synth::generate(c.spec), o).manifest;
  c.store = open_frame_store(c.manifest);
  return c;
}

std::filesystem::path temp_dir() {
  auto d = std::filesystem::temp_directory_path() / "dbm_test_net";
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("IRD fusion stacks IR then depth") {
  FrameTensor ir(4, 3, 1, 0);
  QuantizedFrame depth(4, 3, 1, 255);
  auto f = fuse_ird(ir, depth);
  CHECK(f.channels() == 2);
  CHECK(f.at(0, 1, 1) == 0);
  CHECK(f.at(1, 1, 1) == 255);
  CHECK(extract_channel(f, 0) == ir);
  CHECK(extract_channel(f, 1) == depth);
  CHECK_THROWS_AS(fuse_ird(ir, QuantizedFrame(5, 3, 1)), ContractError);
}

TEST_CASE("data-level fusion with RGB needs calibration") {
  std::vector<std::pair<Modality, FrameTensor>> frames{{Modality::Rgb, FrameTensor(4, 4, 3)},
                                                       {Modality::Depth, FrameTensor(4, 4, 1)}};
  CHECK_THROWS_AS(fuse_data_level(frames), ContractError);
  CHECK(fuse_data_level(frames, true).channels() == 4);
  CHECK(fuse_data_level({{Modality::Ir, FrameTensor(4, 4, 1)}, {Modality::Depth, FrameTensor(4, 4, 1)}}).channels() == 2);
}

TEST_CASE("feature columns depend only on their own segment") {
  Model model(small_config());
  model.initialize(3);
  const auto shape = model.clip_shape();
  CHECK(shape == nn::Shape{4, 3, 1, 56, 56});
  auto x = random_input(shape, 1);
  auto f = model.extract_features(x);
  CHECK(f.n_s == 4);
  CHECK(f.n_f == 16);
  CHECK(model.extract_features(x) == f);

  // Segment 2 copied over segment 0 gives identical columns.
  auto dup = x;
  const auto per = shape.per_sample();
  std::copy(dup.data.begin() + 2 * per, dup.data.begin() + 3 * per, dup.data.begin());
  auto g = model.extract_features(dup);
  for (int i = 0; i < g.n_f; ++i) {
    CHECK(g.at(i, 0) == g.at(i, 2));
    CHECK(g.at(i, 1) == f.at(i, 1));
    CHECK(g.at(i, 3) == f.at(i, 3));
  }
  CHECK_THROWS_AS(model.extract_features(random_input({3, 3, 1, 56, 56}, 2)), ContractError);
}

TEST_CASE("single segment gives a single column") {
  auto cfg = small_config();
  cfg.n_segments = 1;
  Model model(cfg);
  model.initialize(1);
  auto f = model.extract_features(random_input(model.clip_shape(), 3));
  CHECK(f.n_s == 1);
}

TEST_CASE("batched prediction equals per-clip prediction") {
  Model model(small_config());
  model.initialize(4);
  auto one = model.clip_shape();
  auto a = random_input(one, 1), b = random_input(one, 2);
  nn::Tensor both({2 * one.n, one.c, one.t, one.h, one.w});
  std::copy(a.data.begin(), a.data.end(), both.data.begin());
  std::copy(b.data.begin(), b.data.end(), both.data.begin() + a.size());
  auto batch = model.predict_batch(both);
  REQUIRE(batch.size() == 2);
  auto pa = model.predict(a), pb = model.predict(b);
  for (std::size_t c = 0; c < pa.size(); ++c) {
    CHECK(batch[0][c] == doctest::Approx(pa[c]).epsilon(1e-6));
    CHECK(batch[1][c] == doctest::Approx(pb[c]).epsilon(1e-6));
  }
}

TEST_CASE("2D and 3D learning-rate traces") {
  auto c2 = TrainConfig::preset_2d();
  CHECK(c2.lr == 0.001);
  CHECK(c2.max_epochs == 40);
  CHECK(c2.batch == 32);
  for (int e = 1; e <= 40; ++e) {
    const double want = e <= 15 ? 0.001 : e <= 30 ? 0.0001 : 0.00001;
    CHECK(c2.lr_at(e) == doctest::Approx(want).epsilon(1e-12));
  }
  auto c3 = TrainConfig::preset_3d();
  CHECK(c3.lr == 0.1);
  CHECK(c3.decay_epochs == std::vector<int>{20, 35});
  CHECK(c3.max_epochs == 45);
  CHECK(c3.lr_at(20) == doctest::Approx(0.1));
  CHECK(c3.lr_at(21) == doctest::Approx(0.01));
  CHECK(c3.lr_at(36) == doctest::Approx(0.001));
  CHECK(TrainConfig::from_json(c3.to_json()).to_json() == c3.to_json());
}

TEST_CASE("train config invariants") {
  auto c = TrainConfig::preset_2d();
  c.decay_epochs = {30, 15};
  CHECK_THROWS_AS(c.validate(), ContractError);
  c.decay_epochs = {15, 40};
  CHECK_THROWS_AS(c.validate(), ContractError);
  c.decay_epochs = {15, 30};
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("score_predictions") {
  std::vector<int> labels{0, 1, 2, 0, 1, 2};
  std::vector<nn::Vec> perfect, constant;
  for (int l : labels) {
    nn::Vec s(3, 0.1);
    s[l] = 0.8;
    perfect.push_back(s);
    constant.push_back({0.2, 0.5, 0.3});
  }
  auto r = score_predictions(labels, perfect, 3);
  CHECK(r.accuracy == 1.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(r.confusion[i][j] == (i == j ? 2 : 0));
  CHECK(score_predictions(labels, constant, 3).accuracy == doctest::Approx(1.0 / 3.0));
  auto tie = score_predictions({1}, {{0.5, 0.5, 0.0}}, 3);
  CHECK(tie.predictions[0] == 0);
  auto back = eval_result_from_json(to_json(r, true));
  CHECK(back.confusion == r.confusion);
  CHECK(back.scores == r.scores);
}

TEST_CASE("checkpoint round trip keeps predictions") {
  auto cfg = small_config(InputModality::Ird);
  cfg.consensus = nn::Consensus::MaxP;
  Model model(cfg);
  model.initialize(9);
  auto path = temp_dir() / "ckpt.jsonl";
  CheckpointInfo info;
  info.seed = 9;
  info.config_hash = "abc";
  info.epoch = 3;
  save_checkpoint(model, path, info);
  CheckpointInfo back_info;
  Model back = load_checkpoint(path, &back_info);
  CHECK(back_info.seed == 9);
  CHECK(back_info.config_hash == "abc");
  CHECK(back.config().to_json() == cfg.to_json());
  auto x = random_input(model.clip_shape(), 4);
  CHECK(back.predict(x) == model.predict(x));
}

TEST_CASE("pretrained RGB weights initialize a depth model") {
  Model rgb(small_config(InputModality::Rgb));
  rgb.initialize(1);
  Model ird(small_config(InputModality::Ird));
  ird.initialize(2);
  init_from_pretrained(ird, rgb);
  auto* src = nn::first_conv(rgb.backbone());
  auto* dst = nn::first_conv(ird.backbone());
  REQUIRE(dst->in_channels() == 2);
  CHECK(dst->weight().value.data == nn::adapt_input_channels(*src, 2).weight().value.data);
}

TEST_CASE("clip input is deterministic and normalized") {
  auto c = small_corpus();
  auto cfg = small_config();
  const auto& clip = c.manifest.records.front();
  auto a = build_clip_input(*c.store, clip, cfg, true, 7);
  CHECK(a.data == build_clip_input(*c.store, clip, cfg, true, 7).data);
  CHECK(a.shape == nn::Shape{4, 3, 1, 56, 56});
  for (float v : a.data) {
    REQUIRE(v >= -2.0f);
    REQUIRE(v <= 2.0f);
  }
  CHECK(normalize_pixel(0) == -2.0f);
  CHECK(normalize_pixel(255) == doctest::Approx(2.0f));
}

TEST_CASE("short training run follows its schedule and restores the best epoch") {
  auto c = small_corpus();
  Model model(small_config());
  model.initialize(1);
  TrainConfig tc;
  tc.lr = 0.02;
  tc.max_epochs = 4;
  tc.decay_epochs = {2, 3};
  tc.batch = 8;
  int calls = 0;
  auto r = train(model, c.manifest, *c.store, tc, 1, [&](const EpochRecord&) { ++calls; });
  REQUIRE(r.history.size() == 4);
  CHECK(calls == 4);
  CHECK(r.history[0].lr == doctest::Approx(0.02));
  CHECK(r.history[1].lr == doctest::Approx(0.02));
  CHECK(r.history[2].lr == doctest::Approx(0.002));
  CHECK(r.history[3].lr == doctest::Approx(0.0002));
  for (auto& e : r.history) CHECK(std::isfinite(e.train_loss));
  auto v = evaluate(model, c.manifest, Partition::Val, *c.store);
  CHECK(v.accuracy == doctest::Approx(r.best_val_acc));
}

TEST_CASE("divergent training is reported") {
  auto c = small_corpus();
  Model model(small_config());
  model.initialize(1);
  TrainConfig tc;
  tc.lr = 1e30;
  tc.max_epochs = 2;
  tc.decay_epochs = {1};
  tc.batch = 4;
  CHECK_THROWS_AS(train(model, c.manifest, *c.store, tc, 1), DivergenceError);
}
