// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dbm/cli.hpp"
#include "dbm/framestore.hpp"
#include "dbm/fusion.hpp"
#include "dbm/manifest.hpp"
#include "dbm/net.hpp"
#include "dbm/nn/head.hpp"
#include "dbm/prep.hpp"
#include "dbm/rng.hpp"
#include "dbm/runtime.hpp"
#include "dbm/synth.hpp"
#include "dst_oracle.hpp"

using namespace dbm;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "" : "!") + what);
  }
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << title << ")";
  for (std::size_t i = 0; i < o.notes.size(); ++i) std::cout << (i == 0 ? ": " : "; ") << o.notes[i];
  std::cout << std::endl;
}

// ---------------------------------------------------------------------------
// 1. depth quantization

int depth_reference(double d) {
  if (d <= 0.0) return 0;
  const long double ratio = 0.5L / static_cast<long double>(d);
  return static_cast<int>(std::floor(255.0L * (ratio < 1.0L ? ratio : 1.0L)));
}

Outcome check_depth() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(101);
  std::int64_t mismatches = 0;
  for (int i = 0; i < 1'000'000; ++i) {
    const double d = uniform(rng, 0.0, 10.0);
    mismatches += prep::quantize_depth(d) != depth_reference(d);
  }
  const double secs = seconds_since(t0);
  o.require(mismatches == 0, std::to_string(mismatches) + " mismatches in 1e6");
  o.require(prep::quantize_depth(0.0) == 0 && prep::quantize_depth(0.5) == 255, "d=0 -> 0, d=0.5 -> 255");
  o.require(secs < 10.0, fmt(secs, 3) + " s");
  return o;
}

// ---------------------------------------------------------------------------
// 2. clip windowing

Outcome check_windowing() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(202);
  int broken = 0, uneven = 0;
  double long_sum = 0.0;
  std::int64_t long_chunks = 0;
  for (int i = 0; i < 10'000; ++i) {
    const auto len = static_cast<std::int64_t>(uniform_int(rng, 1, 500));
    const auto chunks = prep::split_clip({0, len}, {});
    std::int64_t next = 0, lo = len, hi = 0;
    for (const auto& c : chunks) {
      if (c.first != next || c.count < 1) ++broken;
      next = c.end();
      lo = std::min(lo, c.count);
      hi = std::max(hi, c.count);
    }
    if (next != len || chunks.empty()) ++broken;
    if (hi - lo > 1) ++uneven;
    if (len >= 50) {
      for (const auto& c : chunks) long_sum += static_cast<double>(c.count);
      long_chunks += static_cast<std::int64_t>(chunks.size());
    }
  }
  const double secs = seconds_since(t0);
  const double mean = long_sum / static_cast<double>(long_chunks);
  o.require(broken == 0, "contiguous/disjoint/covering (" + std::to_string(broken) + " broken)");
  o.require(uneven == 0, "lengths within 1 (" + std::to_string(uneven) + " uneven)");
  o.require(std::abs(mean - 50.0) <= 5.0, "mean chunk " + fmt(mean) + " for lengths >= 50");
  o.require(secs < 5.0, fmt(secs, 3) + " s");
  return o;
}

// ---------------------------------------------------------------------------
// 3. balancing and driver split

Outcome check_balance_split() {
  Outcome o;
  const std::vector<std::size_t> counts{970, 1120, 1255, 1388, 1502, 1640, 1777, 1886, 2011, 2190, 2345, 2560, 2768};
  DatasetManifest m;
  Rng rng(303);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (std::size_t k = 0; k < counts[c]; ++k) {
      ClipRecord r;
      r.clip_id = "c" + std::to_string(c) + "_" + std::to_string(k);
      r.driver_id = "driver" + std::to_string(uniform_int(rng, 0, 36));
      r.label = static_cast<int>(c);
      r.frame_count = 50;
      r.sources = {"rgb/" + r.clip_id, "ir/" + r.clip_id, "depth/" + r.clip_id};
      m.records.push_back(std::move(r));
    }
  }
  const auto balanced = prep::balance_classes(m, 7);
  std::set<std::size_t> sizes;
  for (const auto& [label, n] : class_histogram(balanced)) sizes.insert(n);
  o.require(sizes.size() == 1, "uniform counts " + std::to_string(*sizes.begin()));

  const auto split = prep::split_by_driver(balanced, {}, 7);
  const auto drivers = drivers_by_partition(split);
  std::set<std::string> seen;
  std::size_t total_drivers = 0;
  for (auto p : {Partition::Train, Partition::Val, Partition::Test}) {
    if (!drivers.count(p)) continue;
    for (const auto& d : drivers.at(p)) seen.insert(d);
    total_drivers += drivers.at(p).size();
  }
  o.require(seen.size() == 37 && total_drivers == 37, "37 drivers, no overlap");

  const double n = static_cast<double>(split.records.size());
  const std::vector<std::pair<Partition, double>> target{
      {Partition::Train, 4.0 / 6.0}, {Partition::Val, 1.0 / 6.0}, {Partition::Test, 1.0 / 6.0}};
  for (const auto& [p, want] : target) {
    const double got = static_cast<double>(split.partition(p).size()) / n;
    o.require(std::abs(got / want - 1.0) <= 0.10, std::string(to_string(p)) + " share " + fmt(got));
  }
  return o;
}

// ---------------------------------------------------------------------------
// 4. consensus

nn::FeatureMatrix random_features(Rng& rng, int n_f, int n_s) {
  nn::FeatureMatrix x(n_f, n_s);
  for (auto& v : x.x) v = uniform(rng, -1.0, 1.0);
  return x;
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b)); }

double head_gradient_error(nn::ConsensusHead& h, const nn::FeatureMatrix& x, int label) {
  const double e = 1e-6;
  auto loss_at = [&](const nn::FeatureMatrix& in) {
    h.forward(in);
    return h.loss(label);
  };
  h.forward(x);
  for (auto* p : h.params()) p->grad.assign(p->value.size(), 0.0);
  const auto dx = h.backward(label);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.x.size(); ++i) {
    auto xp = x, xm = x;
    xp.x[i] += e;
    xm.x[i] -= e;
    worst = std::max(worst, rel_error((loss_at(xp) - loss_at(xm)) / (2 * e), dx.x[i]));
  }
  for (auto* p : h.params()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double v = p->value[i];
      p->value[i] = v + e;
      const double lp = loss_at(x);
      p->value[i] = v - e;
      const double lm = loss_at(x);
      p->value[i] = v;
      worst = std::max(worst, rel_error((lp - lm) / (2 * e), p->grad[i]));
    }
  }
  return worst;
}

Outcome check_consensus() {
  Outcome o;
  Rng rng(404);

  int variant = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n_s = static_cast<int>(uniform_int(rng, 2, 8));
    const int n_f = static_cast<int>(uniform_int(rng, 1, 16));
    nn::ConsensusHead h(nn::Consensus::MaxP, n_f, n_s, 13, 0.5, 16);
    h.initialize(rng);
    const auto x = random_features(rng, n_f, n_s);
    std::vector<int> perm(n_s);
    std::iota(perm.begin(), perm.end(), 0);
    dbm::shuffle(perm.begin(), perm.end(), rng);
    nn::FeatureMatrix y(n_f, n_s);
    for (int i = 0; i < n_f; ++i)
      for (int j = 0; j < n_s; ++j) y.at(i, j) = x.at(i, perm[j]);
    variant += h.forward(x) != h.forward(y);
  }
  o.require(variant == 0, "MaxP permutation invariance (" + std::to_string(variant) + "/1000 differ)");

  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const auto kind = t % 2 == 0 ? nn::Consensus::MaxP : nn::Consensus::Mlp;
    nn::ConsensusHead h(kind, 6, 4, 5, 0.5, 8);
    h.initialize(rng);
    worst = std::max(worst, head_gradient_error(h, random_features(rng, 6, 4), static_cast<int>(t % 5)));
  }
  o.require(worst < 1e-4, "MLP head gradient rel. error " + fmt(worst, 3));

  int broken = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = static_cast<int>(uniform_int(rng, 1, 8));
    const int c = static_cast<int>(uniform_int(rng, 2, 13));
    std::vector<nn::Vec> scores(n);
    for (auto& s : scores) {
      nn::Vec logits(c);
      for (auto& v : logits) v = uniform(rng, -3, 3);
      s = nn::softmax(logits);
    }
    const auto avg = nn::consensus_average(scores);
    auto shuffled = scores;
    dbm::shuffle(shuffled.begin(), shuffled.end(), rng);
    broken += nn::consensus_average(shuffled) != avg;
    broken += nn::consensus_average(std::vector<nn::Vec>(n, scores[0])) != scores[0];
  }
  o.require(broken == 0, "average idempotent/commutative (" + std::to_string(broken) + " violations)");
  return o;
}

// ---------------------------------------------------------------------------
// 5 to 8 share trained models on one synthetic corpus.

fusion::Scores random_scores(Rng& rng, int c) {
  fusion::Scores s(c);
  double sum = 0.0;
  for (auto& v : s) sum += v = uniform(rng, 0.01, 1.0);
  for (auto& v : s) v /= sum;
  return s;
}

fusion::ValidationStats random_stats(Rng& rng, int c) {
  fusion::ValidationStats s;
  s.confusion.assign(c, std::vector<std::int64_t>(c, 0));
  for (auto& row : s.confusion)
    for (auto& v : row) v = uniform_int(rng, 0, 6);
  for (int i = 0; i < c; ++i) s.confusion[i][i] += uniform_int(rng, 1, 20);
  return s;
}

struct TrainedStream {
  std::string name;
  net::Model model;
  net::TrainResult result;
  net::EvalResult val, test;
  fusion::ValidationStats stats() const { return {val.confusion}; }
};

struct Experiment {
  synth::SynthSpec spec;
  DatasetManifest manifest;
  std::unique_ptr<FrameStore> store;
  net::TrainConfig train_cfg;
  std::uint64_t seed = 0;
  std::vector<TrainedStream> streams;  // rgb maxp, ird maxp, rgb average
  double seconds = 0.0;
};

net::TrainConfig acceptance_train_config() {
  auto tc = net::TrainConfig::preset_2d();
  tc.lr = 0.02;
  tc.jitter.scales = {1.0, 0.875};
  return tc;
}

TrainedStream train_stream(Experiment& ex, const std::string& name, net::InputModality modality,
                           nn::Consensus consensus) {
  net::ModelConfig cfg;
  cfg.modality = modality;
  cfg.base.input_channels = net::channels(modality);
  cfg.consensus = consensus;
  cfg.num_classes = ex.spec.n_classes;
  TrainedStream s{name, net::Model(cfg), {}, {}, {}};
  s.model.initialize(ex.seed);
  const auto t0 = Clock::now();
  s.result = net::train(s.model, ex.manifest, *ex.store, ex.train_cfg, ex.seed, [&](const net::EpochRecord& e) {
    std::cerr << "  [" << name << "] epoch " << e.epoch << " lr " << e.lr << " loss " << fmt(e.train_loss)
              << " val " << fmt(e.val_acc) << std::endl;
  });
  s.val = net::evaluate(s.model, ex.manifest, Partition::Val, *ex.store);
  s.test = net::evaluate(s.model, ex.manifest, Partition::Test, *ex.store);
  std::cerr << "  [" << name << "] best val " << s.result.best_val_acc << " at epoch " << s.result.best_epoch
            << ", test " << s.test.accuracy << " (" << fmt(seconds_since(t0), 3) << " s)" << std::endl;
  return s;
}

Experiment run_experiment() {
  Experiment ex;
  const auto t0 = Clock::now();
  ex.seed = 7;
  ex.spec.n_classes = 13;
  ex.spec.drivers = 20;
  ex.spec.clips_per_driver_per_class = 5;
  ex.spec.seed = ex.seed;
  prep::PrepOptions opts;
  opts.seed = ex.seed;
  ex.manifest = prep::prepare(synth::generate(ex.spec), opts).manifest;
  ex.store = open_frame_store(ex.manifest);
  ex.train_cfg = acceptance_train_config();
  ex.streams.push_back(train_stream(ex, "rgb-maxp", net::InputModality::Rgb, nn::Consensus::MaxP));
  ex.streams.push_back(train_stream(ex, "ird-maxp", net::InputModality::Ird, nn::Consensus::MaxP));
  ex.streams.push_back(train_stream(ex, "rgb-avg", net::InputModality::Rgb, nn::Consensus::Average));
  ex.seconds = seconds_since(t0);
  return ex;
}

// Test-set accuracy of fusing the RGB and IRD MaxP streams.
double fused_accuracy(const Experiment& ex, fusion::Method method) {
  const auto& a = ex.streams[0];
  const auto& b = ex.streams[1];
  const std::vector<fusion::ValidationStats> stats{a.stats(), b.stats()};
  std::vector<nn::Vec> fused;
  for (std::size_t i = 0; i < a.test.scores.size(); ++i) {
    fused.push_back(fusion::fuse(method, {a.test.scores[i], b.test.scores[i]}, stats).scores);
  }
  return net::score_predictions(a.test.labels, fused, ex.spec.n_classes).accuracy;
}

Outcome check_fusion(const Experiment& ex) {
  Outcome o;
  Rng rng(505);
  double worst = 0.0;
  int fallbacks = 0;
  for (int t = 0; t < 1000; ++t) {
    const int c = static_cast<int>(uniform_int(rng, 2, 13));
    const int k = t % 2 == 0 ? 2 : 3;
    std::vector<fusion::Scores> scores;
    std::vector<fusion::ValidationStats> stats;
    std::vector<oracle::Bpa> bpas;
    for (int i = 0; i < k; ++i) {
      scores.push_back(random_scores(rng, c));
      stats.push_back(random_stats(rng, c));
      bpas.push_back(oracle::from_scores(scores.back(), stats.back().accuracy()));
    }
    const auto got = fusion::fuse_dst(scores, stats);
    fallbacks += got.averaged_fallback;
    const auto want = oracle::pignistic(oracle::combine_all(bpas).mass, c);
    for (int i = 0; i < c; ++i) worst = std::max(worst, std::abs(got.scores[i] - want[i]));
  }
  o.require(worst <= 1e-9 && fallbacks == 0, "DST vs enumerator max diff " + fmt(worst, 3));

  const auto ex62 = fusion::dempster_combine({{0.7, 0.3}, 0.0}, {{0.2, 0.8}, 0.0});
  o.require(std::abs(ex62.conflict - 0.62) < 1e-9 && std::abs(ex62.mass.singleton[0] - 0.3684) < 1e-4 &&
                std::abs(ex62.mass.singleton[1] - 0.6316) < 1e-4,
            "K=" + fmt(ex62.conflict) + " -> " + fmt(ex62.mass.singleton[0]) + "/" + fmt(ex62.mass.singleton[1]));

  int unequal = 0;
  for (int t = 0; t < 1000; ++t) {
    const int c = static_cast<int>(uniform_int(rng, 2, 13));
    const int k = static_cast<int>(uniform_int(rng, 2, 4));
    const auto hits = uniform_int(rng, 1, 10);
    fusion::ValidationStats uniform_stats;
    uniform_stats.confusion.assign(c, std::vector<std::int64_t>(c, 0));
    for (int i = 0; i < c; ++i) {
      uniform_stats.confusion[i][i] = static_cast<std::int64_t>(hits);
      uniform_stats.confusion[i][(i + 1) % c] += 10 - static_cast<std::int64_t>(hits);
    }
    std::vector<fusion::Scores> scores;
    for (int i = 0; i < k; ++i) scores.push_back(random_scores(rng, c));
    unequal += fusion::fuse_bayesian(scores, std::vector<fusion::ValidationStats>(k, uniform_stats)).scores !=
               fusion::fuse_average(scores);
  }
  o.require(unequal == 0, "Bayesian with uniform recalls == average (" + std::to_string(unequal) + " differ)");

  const double avg = fused_accuracy(ex, fusion::Method::Average);
  const double bay = fused_accuracy(ex, fusion::Method::Bayesian);
  const double dst = fused_accuracy(ex, fusion::Method::Dst);
  const double spread = std::max({avg, bay, dst}) - std::min({avg, bay, dst});
  o.require(spread <= 0.005, "test accuracy avg " + fmt(avg) + ", bayes " + fmt(bay) + ", dst " + fmt(dst));
  return o;
}

Outcome check_end_to_end(const Experiment& ex) {
  Outcome o;
  const auto& maxp = ex.streams[0];
  const auto& ird = ex.streams[1];
  const auto& average = ex.streams[2];
  const auto hist = class_histogram(ex.manifest);
  std::size_t min_class = ex.manifest.records.size();
  for (const auto& [label, n] : hist) min_class = std::min(min_class, n);
  std::set<std::string> drivers;
  for (const auto& r : ex.manifest.records) drivers.insert(r.driver_id);
  o.require(ex.spec.n_classes == 13 && drivers.size() >= 20 && min_class >= 100,
            std::to_string(drivers.size()) + " drivers, >= " + std::to_string(min_class) + " clips/class");

  o.require(maxp.result.history.size() <= 40 && maxp.result.best_val_acc >= 0.90,
            "MaxP val " + fmt(maxp.result.best_val_acc) + " (epoch " + std::to_string(maxp.result.best_epoch) + ")");

  bool trace_ok = maxp.result.history.size() == 40;
  for (const auto& e : maxp.result.history) {
    const int decays = (e.epoch > 15) + (e.epoch > 30);
    trace_ok = trace_ok && std::abs(e.lr - ex.train_cfg.lr * std::pow(0.1, decays)) <= 1e-12 * ex.train_cfg.lr;
  }
  o.require(trace_ok, "lr trace decays after epochs 15 and 30 by 0.1");

  o.require(maxp.result.best_val_acc >= average.result.best_val_acc,
            "MaxP " + fmt(maxp.result.best_val_acc) + " >= average " + fmt(average.result.best_val_acc));

  const double best_single = std::max(maxp.test.accuracy, ird.test.accuracy);
  std::string fused_note;
  bool fused_ok = true;
  for (auto m : {fusion::Method::Average, fusion::Method::Bayesian, fusion::Method::Dst}) {
    const double acc = fused_accuracy(ex, m);
    fused_ok = fused_ok && acc >= best_single - 0.005;
    fused_note += " " + fusion::to_string(m) + " " + fmt(acc);
  }
  o.require(fused_ok, "fused test" + fused_note + " vs best single " + fmt(best_single));
  o.require(ex.seconds < 7200.0, fmt(ex.seconds / 60.0, 3) + " min for three models");
  return o;
}

Outcome check_latency(const Experiment& ex) {
  Outcome o;
  auto folded = [&](const TrainedStream& s) {
    net::Model copy = s.model;
    return std::make_shared<runtime::FoldedBackend>(runtime::FoldedBackend::export_model(copy));
  };
  std::vector<runtime::Stream> single{{"rgb", folded(ex.streams[0]), ex.streams[0].stats()}};
  const auto one = runtime::benchmark(single, fusion::Method::Average, 60, runtime::synthetic_source(ex.spec, 11));
  o.require(one.streams[0].p95 < 33.3, "single stream p95 " + fmt(one.streams[0].p95, 3) + " ms");

  std::vector<runtime::Stream> two{{"rgb", folded(ex.streams[0]), ex.streams[0].stats()},
                                   {"ird", folded(ex.streams[1]), ex.streams[1].stats()}};
  const auto both = runtime::benchmark(two, fusion::Method::Dst, 60, runtime::synthetic_source(ex.spec, 12));
  o.require(both.real_time, "two streams + fusion p95 " + fmt(both.total.p95, 3) + " ms of " +
                                fmt(both.budget_ms, 3) + " ms, real-time: " + (both.real_time ? "yes" : "no"));
  return o;
}

Outcome check_backend(const Experiment& ex) {
  Outcome o;
  std::vector<ClipRecord> clips = ex.manifest.partition(Partition::Test);
  for (const auto& r : ex.manifest.partition(Partition::Val)) clips.push_back(r);
  clips.resize(std::min<std::size_t>(clips.size(), 100));
  for (std::size_t k : {std::size_t{0}, std::size_t{1}}) {
    net::Model model = ex.streams[k].model;
    auto exported = runtime::FoldedBackend::export_model(model);
    double worst = 0.0;
    for (const auto& clip : clips) {
      const auto x = net::build_clip_input(*ex.store, clip, model.config(), false, 0);
      const auto want = model.predict(x);
      const auto got = exported.run(x);
      for (std::size_t c = 0; c < want.size(); ++c) worst = std::max(worst, std::abs(got[c] - want[c]));
    }
    o.require(clips.size() == 100 && worst <= 1e-3,
              ex.streams[k].name + " max |diff| " + fmt(worst, 3) + " on " + std::to_string(clips.size()) + " clips");
  }
  return o;
}

// ---------------------------------------------------------------------------
// 9. determinism through the command line

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  if (code != 0) std::cerr << "  dbm " << args.front() << " failed: " << err.str();
  return code == 0;
}

bool pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string d = dir.string();
  return run_cli({"synth", "--classes", "13", "--drivers", "20", "--clips", "5", "--seed", "9", "--procedural", "--out",
                  d + "/corpus"}) &&
         run_cli({"prep", "--manifest", d + "/corpus/manifest.txt", "--out", d + "/prepared.txt", "--seed", "9"}) &&
         run_cli({"train", "--manifest", d + "/prepared.txt", "--out", d + "/run", "--epochs", "16", "--lr", "0.02",
                  "--jitter-scales", "1,0.875", "--seed", "9"}) &&
         run_cli({"eval", "--checkpoint", d + "/run/checkpoint.jsonl", "--manifest", d + "/prepared.txt", "--out",
                  d + "/eval.json"});
}

Outcome check_determinism(const fs::path& workdir) {
  Outcome o;
  const auto t0 = Clock::now();
  const auto a = workdir / "determinism_a";
  const auto b = workdir / "determinism_b";
  const bool ran = pipeline(a) && pipeline(b);
  o.require(ran, "two pipeline runs");
  if (!ran) return o;
  for (const char* file : {"corpus/manifest.txt", "prepared.txt"}) {
    o.require(slurp(a / file) == slurp(b / file), std::string(file) + " byte-identical");
  }
  auto confusion = [](const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return json::parse(line).at("confusion");
  };
  const auto ca = confusion(a / "eval.json");
  o.require(ca == confusion(b / "eval.json") && !ca.empty(), "eval confusion matrices equal");
  o.notes.push_back(fmt(seconds_since(t0) / 60.0, 3) + " min");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string workdir = (fs::temp_directory_path() / "dbm_acceptance").string();
  app.add_option("--workdir", workdir, "Scratch directory")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  try {
    report(1, "depth quantization", check_depth());
    report(2, "clip windowing", check_windowing());
    report(3, "balancing and driver split", check_balance_split());
    report(4, "consensus", check_consensus());

    std::cerr << "training RGB MaxP, IRD MaxP and RGB average streams" << std::endl;
    const Experiment ex = run_experiment();
    report(5, "fusion", check_fusion(ex));
    report(6, "end-to-end synthetic experiment", check_end_to_end(ex));
    report(7, "runtime budget", check_latency(ex));
    report(8, "backend equivalence", check_backend(ex));
    report(9, "determinism", check_determinism(workdir));
  } catch (const std::exception& e) {
    std::cout << "FAIL aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
