#include "dbm/cli.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>

#include "CLI11.hpp"

#include "dbm/error.hpp"
#include "dbm/framestore.hpp"
#include "dbm/fusion.hpp"
#include "dbm/manifest.hpp"
#include "dbm/net.hpp"
#include "dbm/prep.hpp"
#include "dbm/rng.hpp"
#include "dbm/runtime.hpp"
#include "dbm/synth.hpp"

namespace dbm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string RunConfig::hash() const {
  const json canon{{"command", command}, {"values", values}};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canon.dump())));
  return buf;
}

json RunConfig::stamp() const {
  return {{"command", command}, {"config", values}, {"config_hash", hash()}, {"seed", seed}};
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

json header_record(const RunConfig& rc) {
  json j = rc.stamp();
  j["record"] = "header";
  return j;
}

void stamp_manifest(DatasetManifest& m, const RunConfig& rc) {
  m.metadata[rc.command + ".config_hash"] = rc.hash();
  m.metadata[rc.command + ".seed"] = std::to_string(rc.seed);
}

DatasetManifest exclude_classes(const DatasetManifest& m, const std::vector<int>& excluded) {
  if (excluded.empty()) return m;
  const std::set<int> drop(excluded.begin(), excluded.end());
  DatasetManifest out = m;
  out.records.clear();
  for (const auto& r : m.records)
    if (!drop.count(r.label)) out.records.push_back(r);
  return out;
}

// Relative disk locators are rewritten so they still resolve next to `to`.
DatasetManifest rebase(DatasetManifest m, const fs::path& from, const fs::path& to) {
  const fs::path src = fs::absolute(from).parent_path();
  const fs::path dst = fs::absolute(to).parent_path();
  if (src == dst) return m;
  for (auto& r : m.records) {
    for (auto& s : r.sources) {
      if (s.empty() || synth::SynthFrameStore::is_synthetic(s)) continue;
      Locator loc = Locator::parse(s);
      if (fs::path(loc.path).is_absolute()) continue;
      loc.path = fs::relative(src / loc.path, dst).generic_string();
      s = loc.str();
    }
  }
  return m;
}

// ---------------------------------------------------------------------------- streams

struct StreamArgs {
  std::vector<std::string> streams;
  std::vector<std::string> stats;
  std::string fusion = "avg";
  std::string backend = "folded";
};

void add_stream_options(CLI::App* sub, StreamArgs& a) {
  sub->add_option("--streams", a.streams, "Checkpoint or exported model per stream, optionally name=path")
      ->required();
  sub->add_option("--stats", a.stats, "Validation stats file per stream (bayes, dst)");
  sub->add_option("--fusion", a.fusion, "Decision fusion")->check(CLI::IsMember({"avg", "bayes", "dst"}));
  sub->add_option("--backend", a.backend, "Backend for checkpoints")->check(CLI::IsMember({"folded", "reference"}));
}

json stream_values(const StreamArgs& a) {
  std::vector<std::string> names;
  for (const auto& s : a.streams) {
    const auto eq = s.find('=');
    names.push_back(eq == std::string::npos ? fs::path(s).filename().string() : s.substr(0, eq));
  }
  return {{"streams", names}, {"fusion", a.fusion}, {"backend", a.backend}, {"with_stats", !a.stats.empty()}};
}

std::vector<runtime::Stream> load_streams(const StreamArgs& a) {
  if (!a.stats.empty() && a.stats.size() != a.streams.size()) {
    throw ContractError("--stats needs one file per stream");
  }
  std::vector<runtime::Stream> out;
  for (std::size_t i = 0; i < a.streams.size(); ++i) {
    std::string spec = a.streams[i];
    std::string name;
    if (const auto eq = spec.find('='); eq != std::string::npos) {
      name = spec.substr(0, eq);
      spec = spec.substr(eq + 1);
    }
    const std::string format = read_json(spec).value("format", "");
    runtime::Stream s;
    if (format == "dbm-folded") {
      s.backend = std::make_shared<runtime::FoldedBackend>(runtime::FoldedBackend::load(spec));
    } else {
      net::Model model = net::load_checkpoint(spec);
      if (a.backend == "folded") {
        s.backend = std::make_shared<runtime::FoldedBackend>(runtime::FoldedBackend::export_model(model));
      } else {
        s.backend = std::make_shared<runtime::ReferenceBackend>(std::move(model));
      }
    }
    s.name = name.empty() ? net::to_string(s.backend->config().modality) : name;
    if (!a.stats.empty()) s.stats = fusion::ValidationStats::from_json(read_json(a.stats[i]));
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------- subcommands

struct SynthArgs {
  synth::SynthSpec spec;
  fs::path out = "synth";
  bool procedural = false;
};

int run_synth(const SynthArgs& a, std::ostream& out) {
  RunConfig rc{"synth",
               {{"classes", a.spec.n_classes},
                {"drivers", a.spec.drivers},
                {"clips", a.spec.clips_per_driver_per_class},
                {"procedural", a.procedural}},
               a.spec.seed};
  DatasetManifest m = synth::generate(a.spec);
  fs::create_directories(a.out);
  if (!a.procedural) {
    const synth::SynthFrameStore store(a.spec);
    m = synth::materialize(m, store, a.out);
  }
  stamp_manifest(m, rc);
  save_manifest(m, a.out / "manifest.txt");
  out << "wrote " << m.records.size() << " clips to " << (a.out / "manifest.txt").string() << '\n';
  return kExitOk;
}

struct PrepArgs {
  fs::path manifest;
  fs::path out;
  fs::path report;
  int target_span = 50;
  std::string ratios = "4:1:1";
  std::uint64_t seed = 0;
  bool skip_balance = false;
};

int run_prep(const PrepArgs& a, std::ostream& out) {
  RunConfig rc{"prep",
               {{"target_span", a.target_span}, {"ratios", a.ratios}, {"skip_balance", a.skip_balance}},
               a.seed};
  prep::PrepOptions opt;
  opt.windowing.target_span = a.target_span;
  opt.ratios = prep::SplitRatios::parse(a.ratios);
  opt.seed = a.seed;
  opt.balance = !a.skip_balance;
  auto result = prep::prepare(load_manifest(a.manifest), opt);
  DatasetManifest m = rebase(std::move(result.manifest), a.manifest, a.out);
  stamp_manifest(m, rc);
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  save_manifest(m, a.out);

  json report = prep::to_json(result.report);
  report.update(rc.stamp());
  const fs::path report_path = a.report.empty() ? fs::path(a.out.string() + ".report.json") : a.report;
  write_text(report_path, report.dump() + '\n');
  out << "wrote " << m.records.size() << " clips to " << a.out.string() << ", report " << report_path.string()
      << '\n';
  return kExitOk;
}

struct TrainArgs {
  fs::path manifest;
  fs::path out = "run";
  std::string modality = "rgb";
  int segments = 4;
  std::string consensus = "maxp";
  std::string arch = "tiny-2D";
  int input_size = 112;
  int feature_dim = 64;
  int epochs = 0;
  double lr = 0.0;
  int batch = 0;
  std::uint64_t seed = 0;
  bool partial_bn = false;
  std::vector<double> jitter_scales;
  double dropout = 0.5;
  int pool_kernel = 0;
  std::vector<int> exclude;
  fs::path init_from;
};

int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  DatasetManifest m = exclude_classes(load_manifest(a.manifest), a.exclude);
  const auto store = open_frame_store(m, fs::absolute(a.manifest).parent_path());

  net::ModelConfig mc;
  mc.base.family = a.arch;
  mc.base.input_size = a.input_size;
  mc.base.feature_dim = a.feature_dim;
  mc.modality = net::parse_input_modality(a.modality);
  mc.base.input_channels = net::channels(mc.modality);
  mc.n_segments = a.segments;
  mc.consensus = nn::parse_consensus(a.consensus);
  mc.num_classes = m.num_classes();
  mc.dropout = a.dropout;
  mc.pool_kernel = a.pool_kernel;
  mc.validate();

  net::TrainConfig tc = mc.base.is_3d() ? net::TrainConfig::preset_3d() : net::TrainConfig::preset_2d();
  if (a.epochs > 0) {
    tc.max_epochs = a.epochs;
    std::erase_if(tc.decay_epochs, [&](int e) { return e >= tc.max_epochs; });
  }
  if (a.lr > 0.0) tc.lr = a.lr;
  if (a.batch > 0) tc.batch = a.batch;
  tc.partial_batchnorm = a.partial_bn;
  if (!a.jitter_scales.empty()) tc.jitter.scales = a.jitter_scales;
  tc.validate();

  RunConfig rc{"train",
               {{"model", mc.to_json()},
                {"train", tc.to_json()},
                {"exclude_classes", a.exclude},
                {"init_from", !a.init_from.empty()}},
               a.seed};

  net::Model model(mc);
  model.initialize(a.seed);
  if (!a.init_from.empty()) {
    net::Model source = net::load_checkpoint(a.init_from);
    net::init_from_pretrained(model, source);
  }

  fs::create_directories(a.out);
  std::ofstream history(a.out / "history.jsonl", std::ios::binary);
  if (!history) throw IoError("cannot write " + (a.out / "history.jsonl").string());
  history << header_record(rc).dump() << '\n';

  const auto result = net::train(model, m, *store, tc, a.seed, [&](const net::EpochRecord& e) {
    json row = net::to_json(e);
    row["record"] = "epoch";
    history << row.dump() << '\n' << std::flush;
    err << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.train_loss << " train " << e.train_acc << " val "
        << e.val_acc << '\n';
  });

  net::CheckpointInfo info;
  info.train_config = rc.values;
  info.seed = a.seed;
  info.config_hash = rc.hash();
  info.epoch = result.best_epoch;
  info.val_acc = result.best_val_acc;
  net::save_checkpoint(model, a.out / "checkpoint.jsonl", info);

  const auto val = net::evaluate(model, m, Partition::Val, *store);
  json stats = fusion::ValidationStats{val.confusion}.to_json();
  stats["accuracy"] = val.accuracy;
  stats.update(rc.stamp());
  write_text(a.out / "val_stats.json", stats.dump() + '\n');

  out << "best epoch " << result.best_epoch << " val " << result.best_val_acc << ", checkpoint "
      << (a.out / "checkpoint.jsonl").string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  fs::path checkpoint;
  fs::path manifest;
  std::string partition = "test";
  fs::path out;
  fs::path scores_out;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
  net::CheckpointInfo info;
  net::Model model = net::load_checkpoint(a.checkpoint, &info);
  std::vector<int> excluded;
  if (info.train_config.contains("exclude_classes")) excluded = info.train_config["exclude_classes"].get<std::vector<int>>();
  DatasetManifest m = exclude_classes(load_manifest(a.manifest), excluded);
  const auto store = open_frame_store(m, fs::absolute(a.manifest).parent_path());
  std::string upper = a.partition;
  for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  const Partition part = parse_partition(upper);

  RunConfig rc{"eval",
               {{"partition", a.partition}, {"checkpoint_hash", info.config_hash}, {"checkpoint_seed", info.seed}},
               info.seed};
  const auto r = net::evaluate(model, m, part, *store);

  json summary = net::to_json(r);
  summary.update(rc.stamp());
  if (!a.out.empty()) write_text(a.out, summary.dump() + '\n');
  if (!a.scores_out.empty()) {
    json scores = net::to_json(r, true);
    scores.update(rc.stamp());
    write_text(a.scores_out, scores.dump() + '\n');
  }
  out << "accuracy " << r.accuracy << " on " << r.labels.size() << " " << a.partition << " clips\n";
  return kExitOk;
}

struct FuseArgs {
  std::vector<fs::path> scores;
  std::vector<fs::path> stats;
  std::string method = "avg";
  fs::path out;
};

int run_fuse_eval(const FuseArgs& a, std::ostream& out) {
  if (a.scores.size() < 2) throw ContractError("fuse-eval needs at least two score files");
  const auto method = fusion::parse_method(a.method);
  if (method != fusion::Method::Average && a.stats.size() != a.scores.size()) {
    throw ContractError("--stats needs one file per score file for " + a.method);
  }
  std::vector<net::EvalResult> streams;
  for (const auto& p : a.scores) streams.push_back(net::eval_result_from_json(read_json(p)));
  std::vector<fusion::ValidationStats> stats;
  for (const auto& p : a.stats) stats.push_back(fusion::ValidationStats::from_json(read_json(p)));

  const auto& ref = streams.front();
  if (ref.clip_ids.empty()) throw SchemaError(a.scores.front().string() + " has no per-clip scores");
  std::vector<std::map<std::string, std::size_t>> index(streams.size());
  for (std::size_t k = 0; k < streams.size(); ++k)
    for (std::size_t i = 0; i < streams[k].clip_ids.size(); ++i) index[k][streams[k].clip_ids[i]] = i;

  const int n_classes = static_cast<int>(ref.confusion.size());
  std::vector<int> labels;
  std::vector<nn::Vec> fused;
  std::size_t fallbacks = 0, uniform = 0;
  std::set<std::string> warnings;
  for (std::size_t i = 0; i < ref.clip_ids.size(); ++i) {
    std::vector<fusion::Scores> s;
    for (std::size_t k = 0; k < streams.size(); ++k) {
      const auto it = index[k].find(ref.clip_ids[i]);
      if (it == index[k].end()) throw ContractError("clip " + ref.clip_ids[i] + " missing from " + a.scores[k].string());
      if (streams[k].labels[it->second] != ref.labels[i]) throw ContractError("label mismatch for " + ref.clip_ids[i]);
      s.push_back(streams[k].scores[it->second]);
    }
    const auto r = fusion::fuse(method, s, stats);
    fallbacks += r.averaged_fallback ? 1 : 0;
    uniform += r.uniform_weight_classes.empty() ? 0 : 1;
    warnings.insert(r.warnings.begin(), r.warnings.end());
    labels.push_back(ref.labels[i]);
    fused.push_back(r.scores);
  }
  const auto result = net::score_predictions(labels, fused, n_classes);

  std::vector<double> single;
  for (const auto& s : streams) single.push_back(s.accuracy);
  RunConfig rc{"fuse-eval", {{"method", a.method}, {"streams", a.scores.size()}}, 0};
  json j{{"method", a.method},
         {"accuracy", result.accuracy},
         {"clips", labels.size()},
         {"confusion", result.confusion},
         {"stream_accuracy", single},
         {"averaged_fallbacks", fallbacks},
         {"clips_with_uniform_weights", uniform},
         {"warnings", std::vector<std::string>(warnings.begin(), warnings.end())}};
  j.update(rc.stamp());
  if (!a.out.empty()) write_text(a.out, j.dump() + '\n');
  out << a.method << " fused accuracy " << result.accuracy << " on " << labels.size() << " clips\n";
  return kExitOk;
}

struct InferArgs {
  StreamArgs streams;
  std::string source;
  int stride = 15;
  double fps = 30.0;
  long long max_windows = 0;
  fs::path out;
};

int run_infer(const InferArgs& a, std::ostream& out) {
  auto streams = load_streams(a.streams);
  const auto method = fusion::parse_method(a.streams.fusion);
  json values = stream_values(a.streams);
  values["stride"] = a.stride;
  values["fps"] = a.fps;
  const RunConfig rc{"infer", values, 0};

  runtime::FrameSource source;
  const bool camera = !a.source.empty() && std::all_of(a.source.begin(), a.source.end(), ::isdigit);
  if (camera) {
    auto read = open_camera(std::stoi(a.source));
    auto t0 = std::make_shared<std::chrono::steady_clock::time_point>(std::chrono::steady_clock::now());
    source = [read, t0](runtime::FrameTriplet& t) {
      if (!read(t.rgb)) return false;
      t.timestamp = std::chrono::duration<double>(std::chrono::steady_clock::now() - *t0).count();
      return true;
    };
  } else {
    const fs::path dir(a.source);
    if (!fs::is_directory(dir)) throw IoError("source " + a.source + " is neither a directory nor a camera index");
    ClipRecord clip;
    clip.clip_id = dir.filename().string();
    int frames = -1;
    for (Modality m : kAllModalities) {
      const fs::path sub = dir / std::string(to_string(m));
      if (!fs::is_directory(sub)) continue;
      int n = 0;
      for (const auto& e : fs::directory_iterator(sub)) n += e.path().extension() == ".png" ? 1 : 0;
      clip.source(m) = sub.string();
      frames = frames < 0 ? n : std::min(frames, n);
    }
    if (frames <= 0) throw IoError(a.source + " holds no rgb/, ir/ or depth/ frames");
    clip.frame_count = frames;
    auto store = std::make_shared<DiskFrameStore>();
    auto next = std::make_shared<int>(0);
    const double fps = a.fps;
    source = [store, clip, next, fps](runtime::FrameTriplet& t) {
      if (*next >= clip.frame_count) return false;
      t.timestamp = *next / fps;
      if (clip.has(Modality::Rgb)) t.rgb = store->load(clip, Modality::Rgb, *next);
      if (clip.has(Modality::Ir)) t.ir = store->load(clip, Modality::Ir, *next);
      if (clip.has(Modality::Depth)) t.depth = store->load(clip, Modality::Depth, *next);
      ++*next;
      return true;
    };
  }

  std::ofstream file;
  std::ostream* sink = &out;
  if (!a.out.empty()) {
    if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
    file.open(a.out, std::ios::binary);
    if (!file) throw IoError("cannot write " + a.out.string());
    sink = &file;
  }
  *sink << header_record(rc).dump() << '\n';

  runtime::SlidingWindow window(50, a.stride);
  long long emitted = 0;
  runtime::FrameTriplet frame;
  while ((a.max_windows <= 0 || emitted < a.max_windows) && source(frame)) {
    if (auto w = window.push(std::move(frame))) {
      json row = runtime::to_json(runtime::infer_window(*w, streams, method), streams);
      row["record"] = "window";
      *sink << row.dump() << '\n' << std::flush;
      ++emitted;
    }
    frame = runtime::FrameTriplet{};
  }
  if (sink != &out) out << "wrote " << emitted << " window predictions to " << a.out.string() << '\n';
  return kExitOk;
}

struct BenchArgs {
  StreamArgs streams;
  int windows = 100;
  int stride = 15;
  double fps = 30.0;
  std::uint64_t seed = 0;
  fs::path out;
};

int run_bench(const BenchArgs& a, std::ostream& out) {
  auto streams = load_streams(a.streams);
  json values = stream_values(a.streams);
  values["windows"] = a.windows;
  values["stride"] = a.stride;
  values["fps"] = a.fps;
  const RunConfig rc{"bench", values, a.seed};

  synth::SynthSpec spec;
  spec.n_classes = streams.front().backend->config().num_classes;
  spec.seed = a.seed;
  const auto report = runtime::benchmark(streams, fusion::parse_method(a.streams.fusion), a.windows,
                                         runtime::synthetic_source(spec, derive_seed(a.seed, "bench")), a.stride, a.fps);
  json j = runtime::to_json(report);
  j.update(rc.stamp());
  if (!a.out.empty()) write_text(a.out, j.dump() + '\n');
  out << "p95 " << report.total.p95 << " ms per window, budget " << report.budget_ms << " ms, real-time "
      << (report.real_time ? "yes" : "no") << '\n';
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Driver behaviour recognition toolkit", "dbm"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.set_config("--config", "", "INI config file; one [section] per subcommand")->envname(kConfigEnv);
  app.allow_config_extras(CLI::config_extras_mode::error);

  SynthArgs synth_a;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a procedural multi-modal corpus");
  synth_cmd->add_option("--classes", synth_a.spec.n_classes, "Number of classes")->capture_default_str();
  synth_cmd->add_option("--drivers", synth_a.spec.drivers, "Number of drivers")->capture_default_str();
  synth_cmd->add_option("--clips", synth_a.spec.clips_per_driver_per_class, "Clips per driver and class")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth_a.spec.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--out", synth_a.out, "Output directory")->capture_default_str();
  synth_cmd->add_flag("--procedural", synth_a.procedural, "Keep synth: locators instead of writing PNG frames");

  PrepArgs prep_a;
  auto* prep_cmd = app.add_subcommand("prep", "Split, balance and partition a manifest");
  prep_cmd->add_option("--manifest", prep_a.manifest, "Input manifest")->required()->check(CLI::ExistingFile);
  prep_cmd->add_option("--out", prep_a.out, "Output manifest")->required();
  prep_cmd->add_option("--report", prep_a.report, "Report file (default <out>.report.json)");
  prep_cmd->add_option("--target-span", prep_a.target_span, "Clip span in frames")->capture_default_str();
  prep_cmd->add_option("--ratios", prep_a.ratios, "TRAIN:VAL:TEST clip ratios")->capture_default_str();
  prep_cmd->add_option("--seed", prep_a.seed, "Seed")->capture_default_str();
  prep_cmd->add_flag("--skip-balance", prep_a.skip_balance, "Keep the original class counts");

  TrainArgs train_a;
  auto* train_cmd = app.add_subcommand("train", "Train one stream on the TRAIN partition");
  train_cmd->add_option("--manifest", train_a.manifest, "Prepared manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_a.out, "Run directory")->capture_default_str();
  train_cmd->add_option("--modality", train_a.modality, "Input modality")
      ->check(CLI::IsMember({"rgb", "ir", "depth", "ird"}))
      ->capture_default_str();
  train_cmd->add_option("--segments", train_a.segments, "Segments per clip")->capture_default_str();
  train_cmd->add_option("--consensus", train_a.consensus, "Consensus head")
      ->check(CLI::IsMember({"avg", "mlp", "maxp"}))
      ->capture_default_str();
  train_cmd->add_option("--arch", train_a.arch, "Base model family")
      ->check(CLI::IsMember(nn::model_families()))
      ->capture_default_str();
  train_cmd->add_option("--input-size", train_a.input_size, "Input resolution")->capture_default_str();
  train_cmd->add_option("--feature-dim", train_a.feature_dim, "Per-segment feature size")->capture_default_str();
  train_cmd->add_option("--epochs", train_a.epochs, "Epochs (default from the 2D/3D recipe)");
  train_cmd->add_option("--lr", train_a.lr, "Base learning rate (default from the recipe)");
  train_cmd->add_option("--batch", train_a.batch, "Batch size in clips (default from the recipe)");
  train_cmd->add_option("--seed", train_a.seed, "Seed")->capture_default_str();
  train_cmd->add_flag("--partial-bn", train_a.partial_bn, "Freeze all batch norms but the first");
  train_cmd->add_option("--jitter-scales", train_a.jitter_scales, "Crop scales for training augmentation")
      ->delimiter(',');
  train_cmd->add_option("--dropout", train_a.dropout, "Head dropout")->capture_default_str();
  train_cmd->add_option("--pool-kernel", train_a.pool_kernel, "MaxP pooling group size (0 = all segments)");
  train_cmd->add_option("--exclude-classes", train_a.exclude, "Class ids to leave out")->delimiter(',');
  train_cmd->add_option("--init-from", train_a.init_from, "3-channel checkpoint to start from")
      ->check(CLI::ExistingFile);

  EvalArgs eval_a;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one partition");
  eval_cmd->add_option("--checkpoint", eval_a.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--manifest", eval_a.manifest, "Prepared manifest")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--partition", eval_a.partition, "Partition")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_a.out, "Result file (accuracy, confusion)");
  eval_cmd->add_option("--scores-out", eval_a.scores_out, "Per-clip scores file for fuse-eval");

  FuseArgs fuse_a;
  auto* fuse_cmd = app.add_subcommand("fuse-eval", "Fuse per-clip scores of several streams");
  fuse_cmd->add_option("--scores", fuse_a.scores, "Score files from eval --scores-out")
      ->required()
      ->check(CLI::ExistingFile);
  fuse_cmd->add_option("--stats", fuse_a.stats, "Validation stats per stream")->check(CLI::ExistingFile);
  fuse_cmd->add_option("--method", fuse_a.method, "Fusion method")
      ->check(CLI::IsMember({"avg", "bayes", "dst"}))
      ->capture_default_str();
  fuse_cmd->add_option("--out", fuse_a.out, "Result file");

  InferArgs infer_a;
  auto* infer_cmd = app.add_subcommand("infer", "Sliding-window inference over a frame directory or camera");
  add_stream_options(infer_cmd, infer_a.streams);
  infer_cmd->add_option("--source", infer_a.source, "Directory with rgb/, ir/, depth/ frames, or a camera index")
      ->required();
  infer_cmd->add_option("--stride", infer_a.stride, "Frames between windows")->capture_default_str();
  infer_cmd->add_option("--fps", infer_a.fps, "Frame rate of directory sources")->capture_default_str();
  infer_cmd->add_option("--max-windows", infer_a.max_windows, "Stop after this many windows (0 = no limit)");
  infer_cmd->add_option("--out", infer_a.out, "Prediction records (default stdout)");

  BenchArgs bench_a;
  auto* bench_cmd = app.add_subcommand("bench", "Latency benchmark on a synthetic camera");
  add_stream_options(bench_cmd, bench_a.streams);
  bench_cmd->add_option("--windows", bench_a.windows, "Windows to time")->capture_default_str();
  bench_cmd->add_option("--stride", bench_a.stride, "Frames between windows")->capture_default_str();
  bench_cmd->add_option("--fps", bench_a.fps, "Source frame rate")->capture_default_str();
  bench_cmd->add_option("--seed", bench_a.seed, "Synthetic source seed")->capture_default_str();
  bench_cmd->add_option("--out", bench_a.out, "Latency report file");

  for (auto* sub : app.get_subcommands({})) sub->configurable();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) return run_synth(synth_a, out);
    if (*prep_cmd) return run_prep(prep_a, out);
    if (*train_cmd) return run_train(train_a, out, err);
    if (*eval_cmd) return run_eval(eval_a, out);
    if (*fuse_cmd) return run_fuse_eval(fuse_a, out);
    if (*infer_cmd) return run_infer(infer_a, out);
    if (*bench_cmd) return run_bench(bench_a, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitUsage;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace dbm::cli
