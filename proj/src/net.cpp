#include "dbm/net.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "dbm/error.hpp"
#include "dbm/imgproc.hpp"
#include "dbm/nn/optim.hpp"

namespace dbm::net {

using nlohmann::json;

std::string to_string(InputModality m) {
  switch (m) {
    case InputModality::Rgb: return "rgb";
    case InputModality::Ir: return "ir";
    case InputModality::Depth: return "depth";
    case InputModality::Ird: return "ird";
  }
  return "?";
}

InputModality parse_input_modality(const std::string& s) {
  if (s == "rgb") return InputModality::Rgb;
  if (s == "ir") return InputModality::Ir;
  if (s == "depth") return InputModality::Depth;
  if (s == "ird") return InputModality::Ird;
  throw SchemaError("unknown modality '" + s + "' (expected rgb, ir, depth or ird)");
}

int channels(InputModality m) {
  switch (m) {
    case InputModality::Rgb: return 3;
    case InputModality::Ird: return 2;
    default: return 1;
  }
}

FrameTensor fuse_ird(const FrameTensor& ir, const QuantizedFrame& depth) {
  if (ir.channels() != 1 || depth.channels() != 1) throw ContractError("IRD fusion takes 1-channel IR and depth");
  if (ir.width() != depth.width() || ir.height() != depth.height()) {
    throw ContractError("IR " + std::to_string(ir.width()) + "x" + std::to_string(ir.height()) + " and depth " +
                        std::to_string(depth.width()) + "x" + std::to_string(depth.height()) + " are not aligned");
  }
  return stack_channels(ir, depth);
}

FrameTensor fuse_data_level(const std::vector<std::pair<Modality, FrameTensor>>& frames, bool calibrated) {
  if (frames.empty()) throw ContractError("nothing to fuse");
  bool rgb = false, aligned = false;
  for (const auto& [m, f] : frames) (m == Modality::Rgb ? rgb : aligned) = true;
  if (rgb && aligned && !calibrated) {
    throw ContractError("RGB is not pixel-aligned with IR/depth; data-level fusion needs calibrated input");
  }
  FrameTensor out = frames.front().second;
  for (std::size_t i = 1; i < frames.size(); ++i) out = stack_channels(out, frames[i].second);
  return out;
}

// ---------------------------------------------------------------------------- ModelConfig / Model

void ModelConfig::validate() const {
  base.validate();
  if (base.input_channels != channels(modality)) {
    throw ContractError("modality " + to_string(modality) + " has " + std::to_string(channels(modality)) +
                        " channels but the base model expects " + std::to_string(base.input_channels));
  }
  if (n_segments < 1) throw ContractError("n_segments must be at least 1");
  if (num_classes < 2) throw ContractError("need at least two classes");
}

json ModelConfig::to_json() const {
  return {{"base", base.to_json()},         {"modality", to_string(modality)}, {"segments", n_segments},
          {"consensus", nn::to_string(consensus)}, {"classes", num_classes}, {"dropout", dropout},
          {"hidden", hidden},               {"pool_kernel", pool_kernel}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.base = nn::BaseModelSpec::from_json(j.at("base"));
  c.modality = parse_input_modality(j.at("modality").get<std::string>());
  c.n_segments = j.at("segments").get<int>();
  c.consensus = nn::parse_consensus(j.at("consensus").get<std::string>());
  c.num_classes = j.at("classes").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.hidden = j.value("hidden", 64);
  c.pool_kernel = j.value("pool_kernel", 0);
  c.validate();
  return c;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  backbone_ = nn::build_backbone(cfg_.base);
  head_ = nn::ConsensusHead(cfg_.consensus, cfg_.base.feature_dim, cfg_.n_segments, cfg_.num_classes, cfg_.dropout,
                            cfg_.hidden, cfg_.pool_kernel);
}

void Model::initialize(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  nn::initialize(backbone_, rng);
  head_.initialize(rng);
}

nn::Shape Model::clip_shape() const {
  return nn::Shape{cfg_.n_segments, cfg_.base.input_channels, cfg_.base.clip_len(), cfg_.base.input_size,
                   cfg_.base.input_size};
}

nn::FeatureMatrix Model::extract_features(const nn::Tensor& segments) {
  if (!(segments.shape == clip_shape())) {
    throw ContractError("expected segment input " + clip_shape().str() + ", got " + segments.shape.str());
  }
  const nn::Tensor f = backbone_.forward(segments, nn::Context{nn::Mode::Eval, nullptr});
  const int nf = cfg_.base.feature_dim;
  nn::FeatureMatrix x(nf, cfg_.n_segments);
  for (int j = 0; j < cfg_.n_segments; ++j)
    for (int i = 0; i < nf; ++i) x.at(i, j) = f.data[static_cast<std::size_t>(j) * nf + i];
  return x;
}

nn::Vec Model::predict(const nn::Tensor& segments) { return head_.forward(extract_features(segments)); }

std::vector<nn::Vec> Model::predict_batch(const nn::Tensor& clips) {
  const nn::Shape one = clip_shape();
  if (clips.shape.n % one.n != 0 || clips.shape.c != one.c || clips.shape.t != one.t || clips.shape.h != one.h ||
      clips.shape.w != one.w) {
    throw ContractError("expected a stack of " + one.str() + " clips, got " + clips.shape.str());
  }
  const nn::Tensor f = backbone_.forward(clips, nn::Context{nn::Mode::Eval, nullptr});
  const int nf = cfg_.base.feature_dim;
  const int ns = cfg_.n_segments;
  std::vector<nn::Vec> out;
  for (int b = 0; b < clips.shape.n / ns; ++b) {
    nn::FeatureMatrix x(nf, ns);
    for (int j = 0; j < ns; ++j)
      for (int i = 0; i < nf; ++i) x.at(i, j) = f.data[static_cast<std::size_t>(b * ns + j) * nf + i];
    out.push_back(head_.forward(x));
  }
  return out;
}

std::vector<nn::Param*> Model::params() {
  std::vector<nn::Param*> out;
  backbone_.collect_params("backbone.", out);
  return out;
}

std::vector<nn::Buffer> Model::buffers() {
  std::vector<nn::Buffer> out;
  backbone_.collect_buffers("backbone.", out);
  return out;
}

// ---------------------------------------------------------------------------- input pipeline

FrameTensor load_input_frame(const FrameStore& store, const ClipRecord& clip, InputModality modality, int index) {
  auto need = [&](Modality m) {
    if (!clip.has(m)) {
      throw ContractError("clip " + clip.clip_id + " has no " + std::string(dbm::to_string(m)) + " source");
    }
    return store.load(clip, m, index);
  };
  switch (modality) {
    case InputModality::Rgb: return need(Modality::Rgb);
    case InputModality::Ir: return need(Modality::Ir);
    case InputModality::Depth: return need(Modality::Depth);
    case InputModality::Ird: {
      FrameTensor ir = need(Modality::Ir);
      return fuse_ird(ir, need(Modality::Depth));
    }
  }
  throw ContractError("unknown modality");
}

std::vector<std::vector<int>> sample_input_indices(int frame_count, const ModelConfig& cfg, bool train,
                                                   std::uint64_t seed) {
  const auto mode = train ? sampling::SampleMode::RandomTrain : sampling::SampleMode::CenterEval;
  std::vector<std::vector<int>> out;
  if (!cfg.base.is_3d()) {
    for (int i : sampling::sample_segments(frame_count, {cfg.n_segments, mode}, seed)) out.push_back({i});
    return out;
  }
  const std::int64_t len = frame_count;
  const std::int64_t n = cfg.n_segments;
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t lo = i * len / n, hi = (i + 1) * len / n;
    if (hi <= lo) lo = 0, hi = len;
    auto idx = sampling::sample_clip_3d(static_cast<int>(hi - lo), {cfg.base.clip_len(), 2, mode},
                                        derive_seed(seed, static_cast<std::uint64_t>(i)));
    for (int& v : idx) v += static_cast<int>(lo);
    out.push_back(std::move(idx));
  }
  return out;
}

void build_clip_input(const FrameStore& store, const ClipRecord& clip, const ModelConfig& cfg, bool train,
                      std::uint64_t seed, const sampling::ScaleJitter& jitter, float* dst) {
  const auto indices = sample_input_indices(clip.frame_count, cfg, train, derive_seed(seed, "temporal"));
  const std::uint64_t crop_seed = derive_seed(seed, "crop");
  const int s = cfg.base.input_size;
  const int c = cfg.base.input_channels;
  const int t = cfg.base.clip_len();
  const std::size_t plane = static_cast<std::size_t>(s) * s;
  std::map<int, FrameTensor> cache;
  for (std::size_t seg = 0; seg < indices.size(); ++seg) {
    for (int ti = 0; ti < t; ++ti) {
      const int fi = indices[seg][ti];
      auto it = cache.find(fi);
      if (it == cache.end()) {
        const FrameTensor raw = load_input_frame(store, clip, cfg.modality, fi);
        it = cache.emplace(fi, sampling::augment_spatial(raw, train, s, crop_seed, jitter)).first;
      }
      const FrameTensor& f = it->second;
      if (f.channels() != c) throw ContractError("frame channel count does not match the model input");
      for (int ch = 0; ch < c; ++ch) {
        float* out = dst + ((seg * c + ch) * t + ti) * plane;
        const auto src = f.plane(ch);
        for (std::size_t k = 0; k < plane; ++k) out[k] = normalize_pixel(src[k]);
      }
    }
  }
}

nn::Tensor build_clip_input(const FrameStore& store, const ClipRecord& clip, const ModelConfig& cfg, bool train,
                            std::uint64_t seed, const sampling::ScaleJitter& jitter) {
  nn::Tensor x(nn::Shape{cfg.n_segments, cfg.base.input_channels, cfg.base.clip_len(), cfg.base.input_size,
                         cfg.base.input_size});
  build_clip_input(store, clip, cfg, train, seed, jitter, x.data.data());
  return x;
}

// ---------------------------------------------------------------------------- TrainConfig

TrainConfig TrainConfig::preset_2d() { return TrainConfig{}; }

TrainConfig TrainConfig::preset_3d() {
  TrainConfig c;
  c.lr = 0.1;
  c.momentum = 0.9;
  c.dampening = 0.9;
  c.weight_decay = 1e-3;
  c.decay_epochs = {20, 35};
  c.max_epochs = 45;
  return c;
}

double TrainConfig::lr_at(int epoch) const {
  return nn::MultiStepSchedule{lr, lr_decay_factor, decay_epochs}.lr(epoch);
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ContractError("lr must be positive");
  if (max_epochs < 1) throw ContractError("max_epochs must be at least 1");
  if (batch < 1) throw ContractError("batch must be at least 1");
  if (momentum < 0.0 || momentum >= 1.0) throw ContractError("momentum must be in [0, 1)");
  if (dampening < 0.0 || dampening > 1.0) throw ContractError("dampening must be in [0, 1]");
  if (weight_decay < 0.0) throw ContractError("weight_decay must be non-negative");
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1]) throw ContractError("decay epochs must be strictly increasing");
    if (decay_epochs[i] < 1 || decay_epochs[i] >= max_epochs) {
      throw ContractError("decay epochs must lie in [1, max_epochs)");
    }
  }
}

json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"momentum", momentum},
          {"dampening", dampening},
          {"weight_decay", weight_decay},
          {"lr_decay_factor", lr_decay_factor},
          {"decay_epochs", decay_epochs},
          {"max_epochs", max_epochs},
          {"batch", batch},
          {"partial_batchnorm", partial_batchnorm},
          {"jitter",
           {{"scales", jitter.scales},
            {"max_distort", jitter.max_distort},
            {"more_fix_crop", jitter.more_fix_crop},
            {"eval_crop_scale", jitter.eval_crop_scale}}}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.dampening = j.at("dampening").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.lr_decay_factor = j.at("lr_decay_factor").get<double>();
  c.decay_epochs = j.at("decay_epochs").get<std::vector<int>>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.batch = j.at("batch").get<int>();
  c.partial_batchnorm = j.at("partial_batchnorm").get<bool>();
  if (j.contains("jitter")) {
    const auto& jj = j.at("jitter");
    c.jitter.scales = jj.at("scales").get<std::vector<double>>();
    c.jitter.max_distort = jj.at("max_distort").get<int>();
    c.jitter.more_fix_crop = jj.at("more_fix_crop").get<bool>();
    c.jitter.eval_crop_scale = jj.at("eval_crop_scale").get<double>();
  }
  c.validate();
  return c;
}

json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},       {"lr", r.lr},           {"train_loss", r.train_loss}, {"train_acc", r.train_acc},
          {"val_loss", r.val_loss}, {"val_acc", r.val_acc}, {"seconds", r.seconds}};
}

// ---------------------------------------------------------------------------- evaluation

EvalResult score_predictions(const std::vector<int>& labels, const std::vector<nn::Vec>& scores, int num_classes) {
  if (labels.size() != scores.size()) throw ContractError("label and score counts differ");
  EvalResult r;
  r.confusion.assign(num_classes, std::vector<std::int64_t>(num_classes, 0));
  r.labels = labels;
  r.scores = scores;
  double loss = 0.0;
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (static_cast<int>(scores[i].size()) != num_classes) throw ContractError("score vector has the wrong length");
    if (labels[i] < 0 || labels[i] >= num_classes) throw ContractError("label out of range");
    const int p = nn::argmax(scores[i]);
    r.predictions.push_back(p);
    ++r.confusion[labels[i]][p];
    correct += p == labels[i];
    loss -= std::log(std::max(scores[i][labels[i]], 1e-300));
  }
  if (!labels.empty()) {
    r.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    r.mean_loss = loss / static_cast<double>(labels.size());
  }
  return r;
}

namespace {

constexpr int kEvalBatch = 8;

std::vector<nn::Vec> predict_clips(Model& model, const std::vector<ClipRecord>& clips, const FrameStore& store,
                                   const sampling::ScaleJitter& jitter, const std::vector<float>* cache) {
  const nn::Shape one = model.clip_shape();
  const std::size_t per_clip = one.numel();
  std::vector<nn::Vec> scores;
  for (std::size_t start = 0; start < clips.size(); start += kEvalBatch) {
    const std::size_t b = std::min<std::size_t>(kEvalBatch, clips.size() - start);
    nn::Tensor x(nn::Shape{static_cast<int>(b) * one.n, one.c, one.t, one.h, one.w});
    for (std::size_t k = 0; k < b; ++k) {
      float* dst = x.data.data() + k * per_clip;
      if (cache != nullptr) {
        std::copy_n(cache->data() + (start + k) * per_clip, per_clip, dst);
      } else {
        build_clip_input(store, clips[start + k], model.config(), false, 0, jitter, dst);
      }
    }
    for (auto& s : model.predict_batch(x)) scores.push_back(std::move(s));
  }
  return scores;
}

}  // namespace

EvalResult evaluate(Model& model, const std::vector<ClipRecord>& clips, const FrameStore& store,
                    const sampling::ScaleJitter& jitter) {
  std::vector<int> labels;
  for (const auto& c : clips) labels.push_back(c.label);
  EvalResult r = score_predictions(labels, predict_clips(model, clips, store, jitter, nullptr), model.config().num_classes);
  for (const auto& c : clips) r.clip_ids.push_back(c.clip_id);
  return r;
}

EvalResult evaluate(Model& model, const DatasetManifest& m, Partition p, const FrameStore& store,
                    const sampling::ScaleJitter& jitter) {
  return evaluate(model, m.partition(p), store, jitter);
}

json to_json(const EvalResult& r, bool with_scores) {
  json j{{"accuracy", r.accuracy}, {"mean_loss", r.mean_loss}, {"clips", r.labels.size()}, {"confusion", r.confusion}};
  if (with_scores) {
    json rows = json::array();
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
      rows.push_back({{"clip_id", i < r.clip_ids.size() ? r.clip_ids[i] : std::to_string(i)},
                      {"label", r.labels[i]},
                      {"prediction", r.predictions[i]},
                      {"scores", r.scores[i]}});
    }
    j["per_clip"] = rows;
  }
  return j;
}

EvalResult eval_result_from_json(const json& j) {
  EvalResult r;
  r.accuracy = j.at("accuracy").get<double>();
  r.mean_loss = j.value("mean_loss", 0.0);
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::int64_t>>>();
  if (j.contains("per_clip")) {
    for (const auto& row : j.at("per_clip")) {
      r.clip_ids.push_back(row.at("clip_id").get<std::string>());
      r.labels.push_back(row.at("label").get<int>());
      r.predictions.push_back(row.at("prediction").get<int>());
      r.scores.push_back(row.at("scores").get<nn::Vec>());
    }
  }
  return r;
}

// ---------------------------------------------------------------------------- training

namespace {

struct Snapshot {
  std::vector<std::vector<float>> params, buffers;
  std::vector<std::vector<double>> head;
};

Snapshot take_snapshot(Model& model) {
  Snapshot s;
  for (auto* p : model.params()) s.params.push_back(p->value.data);
  for (auto& b : model.buffers()) s.buffers.push_back(b.value->data);
  for (auto* p : model.head_params()) s.head.push_back(p->value);
  return s;
}

void restore_snapshot(Model& model, const Snapshot& s) {
  auto params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value.data = s.params[i];
  auto buffers = model.buffers();
  for (std::size_t i = 0; i < buffers.size(); ++i) buffers[i].value->data = s.buffers[i];
  auto head = model.head_params();
  for (std::size_t i = 0; i < head.size(); ++i) head[i]->value = s.head[i];
}

constexpr std::size_t kMaxValCacheFloats = std::size_t{64} << 20;

}  // namespace

TrainResult train(Model& model, const DatasetManifest& m, const FrameStore& store, const TrainConfig& cfg,
                  std::uint64_t seed, const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  const auto train_set = m.partition(Partition::Train);
  const auto val_set = m.partition(Partition::Val);
  if (train_set.empty()) throw ContractError("the TRAIN partition is empty");
  if (val_set.empty()) throw ContractError("the VAL partition is empty");
  for (const auto& c : train_set)
    if (c.label >= model.config().num_classes) throw ContractError("label of " + c.clip_id + " exceeds the head size");

  model.set_partial_bn(cfg.partial_batchnorm);
  nn::Sgd opt(cfg.momentum, cfg.dampening, cfg.weight_decay);
  const auto params = model.params();
  const auto head_params = model.head_params();
  nn::Sequential& backbone = model.backbone();
  nn::ConsensusHead& head = model.head();
  const nn::Shape one = model.clip_shape();
  const std::size_t per_clip = one.numel();
  const int ns = one.n;
  const int nf = model.config().base.feature_dim;
  Rng drop_rng(derive_seed(seed, "dropout"));
  const std::uint64_t aug_seed = derive_seed(seed, "augment");

  // Validation inputs are deterministic, so they are built once.
  std::vector<float> val_cache;
  if (val_set.size() * per_clip <= kMaxValCacheFloats) {
    val_cache.resize(val_set.size() * per_clip);
    for (std::size_t i = 0; i < val_set.size(); ++i) {
      build_clip_input(store, val_set[i], model.config(), false, 0, cfg.jitter, val_cache.data() + i * per_clip);
    }
  }
  std::vector<int> val_labels;
  for (const auto& c : val_set) val_labels.push_back(c.label);

  TrainResult result;
  Snapshot best;
  bool have_best = false;
  std::vector<std::size_t> order(train_set.size());

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = cfg.lr_at(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng order_rng(derive_seed(derive_seed(seed, "epoch"), static_cast<std::uint64_t>(epoch)));
    dbm::shuffle(order.begin(), order.end(), order_rng);

    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t b = std::min<std::size_t>(cfg.batch, order.size() - start);
      nn::Tensor x(nn::Shape{static_cast<int>(b) * ns, one.c, one.t, one.h, one.w});
      for (std::size_t k = 0; k < b; ++k) {
        const std::size_t idx = order[start + k];
        build_clip_input(store, train_set[idx], model.config(), true,
                         derive_seed(aug_seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx)),
                         cfg.jitter, x.data.data() + k * per_clip);
      }
      nn::zero_grad(params, head_params);
      const nn::Tensor feats = backbone.forward(x, nn::Context{nn::Mode::Train, &drop_rng});
      nn::Tensor dfeats(feats.shape);
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < b; ++k) {
        nn::FeatureMatrix fm(nf, ns);
        for (int j = 0; j < ns; ++j)
          for (int i = 0; i < nf; ++i) fm.at(i, j) = feats.data[(k * ns + j) * nf + i];
        const int y = train_set[order[start + k]].label;
        const nn::Vec p = head.forward(fm, true, &drop_rng);
        batch_loss += head.loss(y);
        correct += nn::argmax(p) == y;
        const nn::FeatureMatrix d = head.backward(y, 1.0 / static_cast<double>(b));
        for (int j = 0; j < ns; ++j)
          for (int i = 0; i < nf; ++i) dfeats.data[(k * ns + j) * nf + i] = static_cast<float>(d.at(i, j));
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) + " (lr " +
                              std::to_string(lr) + ")");
      }
      loss_sum += batch_loss;
      backbone.backward(dfeats);
      opt.step(params, head_params, lr);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    const auto val_scores = predict_clips(model, val_set, store, cfg.jitter, val_cache.empty() ? nullptr : &val_cache);
    const EvalResult v = score_predictions(val_labels, val_scores, model.config().num_classes);
    rec.val_loss = v.mean_loss;
    rec.val_acc = v.accuracy;
    if (!std::isfinite(rec.val_loss) && !std::isfinite(rec.train_loss)) {
      throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (!have_best || rec.val_acc > result.best_val_acc) {
      have_best = true;
      result.best_val_acc = rec.val_acc;
      result.best_epoch = epoch;
      best = take_snapshot(model);
    }
    if (on_epoch) on_epoch(rec);
  }
  restore_snapshot(model, best);
  return result;
}

// ---------------------------------------------------------------------------- checkpoints

namespace {

json tensor_record(const std::string& kind, const std::string& name, const nn::Shape& shape,
                   const std::vector<float>& data) {
  return {{"kind", kind},
          {"name", name},
          {"shape", {shape.n, shape.c, shape.t, shape.h, shape.w}},
          {"data", data}};
}

}  // namespace

void save_checkpoint(Model& model, const std::filesystem::path& path, const CheckpointInfo& info) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const json header{{"format", "dbm-checkpoint"}, {"version", 1},
                    {"model", model.config().to_json()}, {"train", info.train_config},
                    {"seed", info.seed}, {"config_hash", info.config_hash},
                    {"epoch", info.epoch}, {"val_acc", info.val_acc}};
  out << header.dump() << '\n';
  for (auto* p : model.params()) out << tensor_record("param", p->name, p->value.shape, p->value.data).dump() << '\n';
  for (auto& b : model.buffers()) out << tensor_record("buffer", b.name, b.value->shape, b.value->data).dump() << '\n';
  for (auto* p : model.head_params()) {
    out << json{{"kind", "head"}, {"name", "head." + p->name}, {"data", p->value}}.dump() << '\n';
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty checkpoint");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ":1: " + e.what());
  }
  if (header.value("format", "") != "dbm-checkpoint") throw SchemaError(path.string() + ": not a checkpoint");
  Model model(ModelConfig::from_json(header.at("model")));
  if (info != nullptr) {
    info->train_config = header.value("train", json::object());
    info->seed = header.value("seed", std::uint64_t{0});
    info->config_hash = header.value("config_hash", "");
    info->epoch = header.value("epoch", 0);
    info->val_acc = header.value("val_acc", 0.0);
  }

  std::map<std::string, std::vector<float>*> floats;
  for (auto* p : model.params()) floats[p->name] = &p->value.data;
  for (auto& b : model.buffers()) floats[b.name] = &b.value->data;
  std::map<std::string, std::vector<double>*> doubles;
  for (auto* p : model.head_params()) doubles["head." + p->name] = &p->value;

  std::size_t seen = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      const auto name = rec.at("name").get<std::string>();
      if (rec.at("kind").get<std::string>() == "head") {
        auto it = doubles.find(name);
        if (it == doubles.end()) throw SchemaError("unexpected tensor " + name);
        auto v = rec.at("data").get<std::vector<double>>();
        if (v.size() != it->second->size()) throw SchemaError("size mismatch for " + name);
        *it->second = std::move(v);
      } else {
        auto it = floats.find(name);
        if (it == floats.end()) throw SchemaError("unexpected tensor " + name);
        auto v = rec.at("data").get<std::vector<float>>();
        if (v.size() != it->second->size()) throw SchemaError("size mismatch for " + name);
        *it->second = std::move(v);
      }
      ++seen;
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (seen != floats.size() + doubles.size()) {
    throw SchemaError(path.string() + ": expected " + std::to_string(floats.size() + doubles.size()) +
                      " tensors, found " + std::to_string(seen));
  }
  return model;
}

void init_from_pretrained(Model& target, Model& source) {
  nn::Conv* src_conv = nn::first_conv(source.backbone());
  nn::Conv* dst_conv = nn::first_conv(target.backbone());
  if (src_conv == nullptr || dst_conv == nullptr) throw ContractError("backbone has no convolution");
  const nn::Conv adapted = nn::adapt_input_channels(*src_conv, dst_conv->in_channels());

  auto src = source.params();
  auto dst = target.params();
  if (src.size() != dst.size()) throw ContractError("pretrained backbone differs in structure");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i] == &dst_conv->weight()) {
      dst[i]->value = adapted.weight().value;
    } else {
      if (src[i]->value.data.size() != dst[i]->value.data.size() || src[i]->name != dst[i]->name) {
        throw ContractError("pretrained tensor " + src[i]->name + " does not fit " + dst[i]->name);
      }
      dst[i]->value = src[i]->value;
    }
  }
  auto sb = source.buffers();
  auto db = target.buffers();
  if (sb.size() != db.size()) throw ContractError("pretrained backbone differs in structure");
  for (std::size_t i = 0; i < db.size(); ++i) *db[i].value = *sb[i].value;
}

}  // namespace dbm::net
