#include "dbm/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "dbm/error.hpp"
#include "dbm/framestore.hpp"
#include "dbm/nn/head.hpp"

namespace dbm::runtime {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {
double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}
}  // namespace

const FrameTensor& FrameTriplet::get(Modality m) const {
  switch (m) {
    case Modality::Rgb: return rgb;
    case Modality::Ir: return ir;
    case Modality::Depth: return depth;
  }
  return rgb;
}

// ---------------------------------------------------------------------------- SlidingWindow

SlidingWindow::SlidingWindow(int span, int stride) : span_(span), stride_(stride) {
  if (span < 1 || stride < 1) throw DomainError("window span and stride must be at least 1");
}

std::optional<WindowSnapshot> SlidingWindow::push(FrameTriplet frame) {
  if (last_ts_ && !(frame.timestamp > *last_ts_)) {
    throw SequencingError("frame timestamp " + std::to_string(frame.timestamp) + " does not follow " +
                          std::to_string(*last_ts_));
  }
  last_ts_ = frame.timestamp;
  buffer_.push_back(std::move(frame));
  if (static_cast<int>(buffer_.size()) > span_) buffer_.pop_front();
  ++count_;
  if (count_ < span_ || (count_ - span_) % stride_ != 0) return std::nullopt;
  WindowSnapshot w;
  w.frames = std::make_shared<const std::vector<FrameTriplet>>(buffer_.begin(), buffer_.end());
  w.end_frame = count_;
  w.timestamp = buffer_.back().timestamp;
  return w;
}

// ---------------------------------------------------------------------------- FrameSynchronizer

FrameSynchronizer::FrameSynchronizer(std::vector<Modality> modalities, double fps)
    : modalities_(std::move(modalities)), half_period_(0.5 / fps) {
  if (modalities_.empty()) throw DomainError("synchronizer needs at least one modality");
  if (!(fps > 0.0)) throw DomainError("fps must be positive");
  for (Modality m : modalities_) queues_[m];
}

std::vector<FrameTriplet> FrameSynchronizer::push(Modality m, double timestamp, FrameTensor frame) {
  auto it = queues_.find(m);
  if (it == queues_.end()) throw ContractError("modality not handled by this synchronizer");
  auto last = last_ts_.find(m);
  if (last != last_ts_.end() && !(timestamp > last->second)) {
    throw SequencingError("timestamps of the " + std::string(to_string(m)) + " stream must increase");
  }
  last_ts_[m] = timestamp;
  it->second.push_back({timestamp, std::move(frame)});

  std::vector<FrameTriplet> out;
  while (true) {
    bool ready = true;
    for (auto& [mod, q] : queues_) ready = ready && !q.empty();
    if (!ready) break;
    // The latest head is the reference; older heads without a partner are dropped.
    double ref = -1e300;
    for (auto& [mod, q] : queues_) ref = std::max(ref, q.front().ts);
    bool starved = false;
    for (auto& [mod, q] : queues_) {
      while (!q.empty() && q.front().ts < ref - half_period_) {
        q.pop_front();
        ++dropped_;
      }
      while (q.size() >= 2 && std::abs(q[1].ts - ref) < std::abs(q[0].ts - ref)) {
        q.pop_front();
        ++dropped_;
      }
      starved = starved || q.empty();
    }
    if (starved) break;
    FrameTriplet t;
    t.timestamp = ref;
    for (auto& [mod, q] : queues_) {
      switch (mod) {
        case Modality::Rgb: t.rgb = std::move(q.front().frame); break;
        case Modality::Ir: t.ir = std::move(q.front().frame); break;
        case Modality::Depth: t.depth = std::move(q.front().frame); break;
      }
      q.pop_front();
    }
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------- FoldedBackend

struct FoldedBackend::Op {
  enum class Kind { Conv, Linear, Relu, Layer, Residual, Shuffle, Affine };
  Kind kind = Kind::Layer;
  // Conv / Linear / Affine
  int in = 0, out = 0, groups = 1;
  nn::Dim3 kernel{1, 1, 1}, stride{1, 1, 1}, pad{0, 0, 0};
  std::vector<float> weight, bias;
  // Layer (pooling, flatten)
  nn::LayerPtr layer;
  // Residual / Shuffle
  std::vector<std::unique_ptr<Op>> body;
};

FoldedBackend::FoldedBackend() = default;
FoldedBackend::~FoldedBackend() = default;
FoldedBackend::FoldedBackend(FoldedBackend&&) noexcept = default;
FoldedBackend& FoldedBackend::operator=(FoldedBackend&&) noexcept = default;

namespace {

using Op = FoldedBackend::Op;
using OpList = std::vector<std::unique_ptr<Op>>;

std::unique_ptr<Op> conv_op(const nn::Conv& c) {
  auto op = std::make_unique<Op>();
  op->kind = Op::Kind::Conv;
  op->in = c.in_channels();
  op->out = c.out_channels();
  op->groups = c.groups();
  op->kernel = c.kernel();
  op->stride = c.stride();
  op->pad = c.pad();
  op->weight = c.weight().value.data;
  op->bias = c.has_bias() ? c.bias().value.data : std::vector<float>(c.out_channels(), 0.0f);
  return op;
}

void fold_bn(Op& op, const nn::BatchNorm& bn) {
  const std::size_t per_out = op.weight.size() / op.out;
  for (int o = 0; o < op.out; ++o) {
    const double scale = bn.gamma().value.data[o] / std::sqrt(static_cast<double>(bn.running_var().data[o]) + bn.eps());
    for (std::size_t k = 0; k < per_out; ++k) op.weight[o * per_out + k] = static_cast<float>(op.weight[o * per_out + k] * scale);
    op.bias[o] = static_cast<float>((op.bias[o] - bn.running_mean().data[o]) * scale + bn.beta().value.data[o]);
  }
}

void export_into(const nn::Sequential& seq, OpList& ops) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const nn::Layer& l = seq.at(i);
    if (const auto* c = dynamic_cast<const nn::Conv*>(&l)) {
      auto op = conv_op(*c);
      if (i + 1 < seq.size()) {
        if (const auto* bn = dynamic_cast<const nn::BatchNorm*>(&seq.at(i + 1))) {
          fold_bn(*op, *bn);
          ++i;
        }
      }
      ops.push_back(std::move(op));
    } else if (const auto* bn = dynamic_cast<const nn::BatchNorm*>(&l)) {
      auto op = std::make_unique<Op>();
      op->kind = Op::Kind::Affine;
      op->out = bn->channels();
      op->weight.assign(op->out, 1.0f);
      op->bias.assign(op->out, 0.0f);
      fold_bn(*op, *bn);
      ops.push_back(std::move(op));
    } else if (const auto* lin = dynamic_cast<const nn::Linear*>(&l)) {
      auto op = std::make_unique<Op>();
      op->kind = Op::Kind::Linear;
      op->in = lin->in_features();
      op->out = lin->out_features();
      op->weight = lin->weight().value.data;
      op->bias = lin->bias().value.data;
      ops.push_back(std::move(op));
    } else if (dynamic_cast<const nn::ReLU*>(&l)) {
      auto op = std::make_unique<Op>();
      op->kind = Op::Kind::Relu;
      ops.push_back(std::move(op));
    } else if (dynamic_cast<const nn::Dropout*>(&l)) {
      continue;
    } else if (const auto* s = dynamic_cast<const nn::Sequential*>(&l)) {
      export_into(*s, ops);
    } else if (const auto* r = dynamic_cast<const nn::Residual*>(&l)) {
      auto op = std::make_unique<Op>();
      op->kind = Op::Kind::Residual;
      export_into(r->body(), op->body);
      ops.push_back(std::move(op));
    } else if (const auto* su = dynamic_cast<const nn::ShuffleUnit*>(&l)) {
      auto op = std::make_unique<Op>();
      op->kind = Op::Kind::Shuffle;
      export_into(su->branch(), op->body);
      ops.push_back(std::move(op));
    } else {
      auto op = std::make_unique<Op>();
      op->kind = Op::Kind::Layer;
      op->layer = l.clone();
      ops.push_back(std::move(op));
    }
  }
}

nn::Tensor direct_conv(const Op& op, const nn::Tensor& x) {
  const nn::Shape& in = x.shape;
  if (in.c != op.in) throw InferenceError("folded conv expects " + std::to_string(op.in) + " channels");
  const nn::Shape o{in.n, op.out, (in.t + 2 * op.pad[0] - op.kernel[0]) / op.stride[0] + 1,
                    (in.h + 2 * op.pad[1] - op.kernel[1]) / op.stride[1] + 1,
                    (in.w + 2 * op.pad[2] - op.kernel[2]) / op.stride[2] + 1};
  nn::Tensor y(o);
  const int cin = op.in / op.groups, cout = op.out / op.groups;
  const int kt = op.kernel[0], kh = op.kernel[1], kw = op.kernel[2];
  for (int n = 0; n < in.n; ++n) {
    const float* xs = x.sample(n);
    float* ys = y.sample(n);
    for (int oc = 0; oc < op.out; ++oc) {
      const int g = oc / cout;
      const float* w = op.weight.data() + static_cast<std::size_t>(oc) * cin * kt * kh * kw;
      float* yc = ys + static_cast<std::size_t>(oc) * o.spatial();
      for (int ot = 0; ot < o.t; ++ot) {
        for (int oh = 0; oh < o.h; ++oh) {
          for (int ow = 0; ow < o.w; ++ow) {
            float acc = op.bias[oc];
            for (int ic = 0; ic < cin; ++ic) {
              const float* xc = xs + static_cast<std::size_t>(g * cin + ic) * in.spatial();
              for (int a = 0; a < kt; ++a) {
                const int it = ot * op.stride[0] - op.pad[0] + a;
                if (it < 0 || it >= in.t) continue;
                for (int b = 0; b < kh; ++b) {
                  const int ih = oh * op.stride[1] - op.pad[1] + b;
                  if (ih < 0 || ih >= in.h) continue;
                  const float* row = xc + (static_cast<std::size_t>(it) * in.h + ih) * in.w;
                  const float* wr = w + ((static_cast<std::size_t>(ic) * kt + a) * kh + b) * kw;
                  for (int d = 0; d < kw; ++d) {
                    const int iw = ow * op.stride[2] - op.pad[2] + d;
                    if (iw >= 0 && iw < in.w) acc += wr[d] * row[iw];
                  }
                }
              }
            }
            yc[(static_cast<std::size_t>(ot) * o.h + oh) * o.w + ow] = acc;
          }
        }
      }
    }
  }
  return y;
}

nn::Tensor run_ops(const OpList& ops, nn::Tensor x) {
  const nn::Context ctx{nn::Mode::Eval, nullptr};
  for (const auto& op : ops) {
    switch (op->kind) {
      case Op::Kind::Conv: x = direct_conv(*op, x); break;
      case Op::Kind::Affine: {
        const std::size_t sp = x.shape.spatial();
        for (int n = 0; n < x.shape.n; ++n)
          for (int c = 0; c < x.shape.c; ++c) {
            float* p = x.sample(n) + c * sp;
            for (std::size_t i = 0; i < sp; ++i) p[i] = p[i] * op->weight[c] + op->bias[c];
          }
        break;
      }
      case Op::Kind::Linear: {
        const int feat = static_cast<int>(x.shape.per_sample());
        if (feat != op->in) throw InferenceError("folded linear expects " + std::to_string(op->in) + " features");
        nn::Tensor y(nn::Shape{x.shape.n, op->out});
        for (int n = 0; n < x.shape.n; ++n) {
          const float* xi = x.sample(n);
          for (int o = 0; o < op->out; ++o) {
            const float* w = op->weight.data() + static_cast<std::size_t>(o) * op->in;
            double acc = op->bias[o];
            for (int k = 0; k < op->in; ++k) acc += static_cast<double>(w[k]) * xi[k];
            y.sample(n)[o] = static_cast<float>(acc);
          }
        }
        x = std::move(y);
        break;
      }
      case Op::Kind::Relu:
        for (auto& v : x.data) v = v > 0.0f ? v : 0.0f;
        break;
      case Op::Kind::Layer: x = op->layer->forward(x, ctx); break;
      case Op::Kind::Residual: {
        nn::Tensor y = run_ops(op->body, x);
        for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
        x = std::move(y);
        break;
      }
      case Op::Kind::Shuffle: {
        auto [a, b] = nn::split_channels(x);
        x = nn::concat_shuffle(a, run_ops(op->body, b));
        break;
      }
    }
  }
  return x;
}

json op_to_json(const Op& op) {
  json j;
  switch (op.kind) {
    case Op::Kind::Conv:
      j = {{"op", "conv"}, {"in", op.in}, {"out", op.out}, {"groups", op.groups}, {"kernel", op.kernel},
           {"stride", op.stride}, {"pad", op.pad}, {"weight", op.weight}, {"bias", op.bias}};
      break;
    case Op::Kind::Affine: j = {{"op", "affine"}, {"out", op.out}, {"weight", op.weight}, {"bias", op.bias}}; break;
    case Op::Kind::Linear:
      j = {{"op", "linear"}, {"in", op.in}, {"out", op.out}, {"weight", op.weight}, {"bias", op.bias}};
      break;
    case Op::Kind::Relu: j = {{"op", "relu"}}; break;
    case Op::Kind::Layer: j = {{"op", "layer"}, {"config", op.layer->config()}}; break;
    case Op::Kind::Residual:
    case Op::Kind::Shuffle: {
      json body = json::array();
      for (const auto& b : op.body) body.push_back(op_to_json(*b));
      j = {{"op", op.kind == Op::Kind::Residual ? "residual" : "shuffle"}, {"body", body}};
      break;
    }
  }
  return j;
}

std::unique_ptr<Op> op_from_json(const json& j) {
  auto op = std::make_unique<Op>();
  const auto kind = j.at("op").get<std::string>();
  if (kind == "conv" || kind == "affine" || kind == "linear") {
    op->kind = kind == "conv" ? Op::Kind::Conv : kind == "affine" ? Op::Kind::Affine : Op::Kind::Linear;
    op->out = j.at("out").get<int>();
    op->in = j.value("in", 0);
    op->weight = j.at("weight").get<std::vector<float>>();
    op->bias = j.at("bias").get<std::vector<float>>();
    if (kind == "conv") {
      op->groups = j.at("groups").get<int>();
      op->kernel = j.at("kernel").get<nn::Dim3>();
      op->stride = j.at("stride").get<nn::Dim3>();
      op->pad = j.at("pad").get<nn::Dim3>();
    }
  } else if (kind == "relu") {
    op->kind = Op::Kind::Relu;
  } else if (kind == "layer") {
    op->kind = Op::Kind::Layer;
    op->layer = nn::make_layer(j.at("config"));
  } else if (kind == "residual" || kind == "shuffle") {
    op->kind = kind == "residual" ? Op::Kind::Residual : Op::Kind::Shuffle;
    for (const auto& b : j.at("body")) op->body.push_back(op_from_json(b));
  } else {
    throw SchemaError("unknown exported op '" + kind + "'");
  }
  return op;
}

}  // namespace

FoldedBackend FoldedBackend::export_model(net::Model& model) {
  FoldedBackend fb;
  fb.cfg_ = model.config();
  export_into(model.backbone(), fb.ops_);
  fb.head_ = model.head();
  return fb;
}

nn::Vec FoldedBackend::run(const nn::Tensor& clip) {
  const nn::Shape want{cfg_.n_segments, cfg_.base.input_channels, cfg_.base.clip_len(), cfg_.base.input_size,
                       cfg_.base.input_size};
  if (!(clip.shape == want)) throw InferenceError("expected input " + want.str() + ", got " + clip.shape.str());
  const nn::Tensor f = run_ops(ops_, clip);
  const int nf = cfg_.base.feature_dim;
  nn::FeatureMatrix x(nf, cfg_.n_segments);
  for (int j = 0; j < cfg_.n_segments; ++j)
    for (int i = 0; i < nf; ++i) x.at(i, j) = f.data[static_cast<std::size_t>(j) * nf + i];
  return head_.forward(x);
}

void FoldedBackend::save(const std::filesystem::path& path) const {
  json ops = json::array();
  for (const auto& op : ops_) ops.push_back(op_to_json(*op));
  json head_params = json::object();
  for (auto* p : const_cast<nn::ConsensusHead&>(head_).params()) head_params[p->name] = p->value;
  const json doc{{"format", "dbm-folded"}, {"version", 1}, {"model", cfg_.to_json()},
                 {"ops", ops}, {"head", head_.config()}, {"head_params", head_params}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

FoldedBackend FoldedBackend::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    const json doc = json::parse(in);
    if (doc.value("format", "") != "dbm-folded") throw SchemaError(path.string() + ": not an exported model");
    FoldedBackend fb;
    fb.cfg_ = net::ModelConfig::from_json(doc.at("model"));
    for (const auto& o : doc.at("ops")) fb.ops_.push_back(op_from_json(o));
    fb.head_ = nn::ConsensusHead::from_config(doc.at("head"));
    for (auto* p : fb.head_.params()) {
      auto v = doc.at("head_params").at(p->name).get<std::vector<double>>();
      if (v.size() != p->value.size()) throw SchemaError("head tensor " + p->name + " has the wrong size");
      p->value = std::move(v);
    }
    return fb;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------- inference

namespace {

class WindowStore final : public FrameStore {
 public:
  explicit WindowStore(const std::vector<FrameTriplet>& frames) : frames_(frames) {}
  FrameTensor load(const ClipRecord&, Modality m, int index) const override {
    const FrameTensor& f = frames_.at(index).get(m);
    if (f.empty()) throw InferenceError("window frame " + std::to_string(index) + " lacks " + std::string(to_string(m)));
    return f;
  }

 private:
  const std::vector<FrameTriplet>& frames_;
};

}  // namespace

WindowResult infer_window(const WindowSnapshot& window, std::vector<Stream>& streams, fusion::Method method) {
  if (!window.frames || window.frames->empty()) throw InferenceError("empty window");
  if (streams.empty()) throw InferenceError("no streams configured");
  const auto t_start = Clock::now();
  WindowResult r;
  r.end_frame = window.end_frame;
  r.timestamp = window.timestamp;
  r.times.stream_ms.assign(streams.size(), 0.0);

  const WindowStore store(*window.frames);
  ClipRecord clip;
  clip.clip_id = "window@" + std::to_string(window.end_frame);
  clip.frame_count = static_cast<int>(window.frames->size());
  clip.sources = {"window", "window", "window"};

  std::vector<nn::Tensor> inputs(streams.size());
  std::vector<bool> ok(streams.size(), true);
  auto t0 = Clock::now();
  for (std::size_t i = 0; i < streams.size(); ++i) {
    try {
      inputs[i] = net::build_clip_input(store, clip, streams[i].backend->config(), false, 0);
    } catch (const Error& e) {
      ok[i] = false;
      r.warnings.push_back("stream " + streams[i].name + " dropped: " + e.what());
    }
  }
  r.times.sampling_ms = ms_since(t0);

  std::vector<fusion::Scores> scores;
  std::vector<fusion::ValidationStats> stats;
  for (std::size_t i = 0; i < streams.size(); ++i) {
    if (!ok[i]) {
      r.dropped_streams.push_back(streams[i].name);
      continue;
    }
    t0 = Clock::now();
    try {
      scores.push_back(streams[i].backend->run(inputs[i]));
      stats.push_back(streams[i].stats);
    } catch (const std::exception& e) {
      r.dropped_streams.push_back(streams[i].name);
      r.warnings.push_back("stream " + streams[i].name + " dropped: " + e.what());
    }
    r.times.stream_ms[i] = ms_since(t0);
  }
  if (scores.empty()) throw InferenceError("every stream failed for window ending at frame " + std::to_string(window.end_frame));

  t0 = Clock::now();
  if (scores.size() == 1) {
    r.scores = scores.front();
  } else {
    bool have_stats = method == fusion::Method::Average;
    if (!have_stats) {
      have_stats = true;
      for (const auto& s : stats) have_stats = have_stats && s.num_classes() == static_cast<int>(scores[0].size());
      if (!have_stats) r.warnings.push_back("missing validation stats; averaging instead");
    }
    const auto fused = fusion::fuse(have_stats ? method : fusion::Method::Average, scores, stats);
    r.scores = fused.scores;
    for (const auto& w : fused.warnings) r.warnings.push_back(w);
  }
  r.label = nn::argmax(r.scores);
  r.times.fusion_ms = ms_since(t0);
  r.times.total_ms = ms_since(t_start);
  return r;
}

json to_json(const WindowResult& r, const std::vector<Stream>& streams) {
  json stream_ms = json::object();
  for (std::size_t i = 0; i < streams.size() && i < r.times.stream_ms.size(); ++i) stream_ms[streams[i].name] = r.times.stream_ms[i];
  return {{"end_frame", r.end_frame},
          {"timestamp", r.timestamp},
          {"label", r.label},
          {"scores", r.scores},
          {"latency_ms",
           {{"sampling", r.times.sampling_ms}, {"streams", stream_ms}, {"fusion", r.times.fusion_ms},
            {"total", r.times.total_ms}}},
          {"dropped_streams", r.dropped_streams},
          {"warnings", r.warnings}};
}

Percentiles percentiles(std::vector<double> samples) {
  Percentiles p;
  if (samples.empty()) return p;
  std::sort(samples.begin(), samples.end());
  auto rank = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(samples.size())));
    return samples[std::clamp<std::size_t>(k, 1, samples.size()) - 1];
  };
  p.p50 = rank(50);
  p.p95 = rank(95);
  p.p99 = rank(99);
  double sum = 0.0;
  for (double v : samples) sum += v;
  p.mean = sum / static_cast<double>(samples.size());
  p.max = samples.back();
  return p;
}

LatencyReport summarize(const std::vector<StageTimes>& times, const std::vector<std::string>& stream_names, int stride,
                        double fps) {
  LatencyReport r;
  r.windows = static_cast<int>(times.size());
  r.stride = stride;
  r.fps = fps;
  r.stream_names = stream_names;
  std::vector<double> s, f, t;
  std::vector<std::vector<double>> per(stream_names.size());
  for (const auto& x : times) {
    s.push_back(x.sampling_ms);
    f.push_back(x.fusion_ms);
    t.push_back(x.total_ms);
    for (std::size_t i = 0; i < per.size() && i < x.stream_ms.size(); ++i) per[i].push_back(x.stream_ms[i]);
  }
  r.sampling = percentiles(s);
  r.fusion = percentiles(f);
  r.total = percentiles(t);
  for (auto& v : per) r.streams.push_back(percentiles(v));
  r.windows_per_second = r.total.mean > 0.0 ? 1000.0 / r.total.mean : 0.0;
  r.budget_ms = stride / fps * 1000.0;
  r.real_time = r.windows > 0 && r.total.p95 <= r.budget_ms;
  return r;
}

LatencyReport benchmark(std::vector<Stream>& streams, fusion::Method method, int n_windows, const FrameSource& source,
                        int stride, double fps) {
  if (n_windows < 1) throw DomainError("n_windows must be at least 1");
  SlidingWindow window(50, stride);
  std::vector<StageTimes> times;
  FrameTriplet frame;
  while (static_cast<int>(times.size()) < n_windows && source(frame)) {
    if (auto w = window.push(std::move(frame))) times.push_back(infer_window(*w, streams, method).times);
    frame = FrameTriplet{};
  }
  if (times.empty()) throw InferenceError("source ended before the first window");
  std::vector<std::string> names;
  for (const auto& s : streams) names.push_back(s.name);
  return summarize(times, names, stride, fps);
}

namespace {
json to_json(const Percentiles& p) {
  return {{"p50", p.p50}, {"p95", p.p95}, {"p99", p.p99}, {"mean", p.mean}, {"max", p.max}};
}
}  // namespace

json to_json(const LatencyReport& r) {
  json streams = json::object();
  for (std::size_t i = 0; i < r.streams.size(); ++i) streams[r.stream_names[i]] = to_json(r.streams[i]);
  return {{"windows", r.windows},
          {"stride", r.stride},
          {"fps", r.fps},
          {"sampling_ms", to_json(r.sampling)},
          {"streams_ms", streams},
          {"fusion_ms", to_json(r.fusion)},
          {"total_ms", to_json(r.total)},
          {"windows_per_second", r.windows_per_second},
          {"budget_ms", r.budget_ms},
          {"real_time", r.real_time ? "yes" : "no"}};
}

FrameSource synthetic_source(const synth::SynthSpec& spec, std::uint64_t seed) {
  struct State {
    synth::Renderer renderer;
    Rng rng;
    synth::ClipPlan plan;
    int frame = 0;
    std::int64_t emitted = 0;
    int total;
    State(const synth::SynthSpec& s, std::uint64_t seed)
        : renderer(s), rng(seed), total(s.drivers * s.n_classes * s.clips_per_driver_per_class) {}
  };
  auto st = std::make_shared<State>(spec, seed);
  st->plan = synth::plan_clip(spec, static_cast<int>(uniform_index(st->rng, st->total)));
  return [st](FrameTriplet& out) {
    if (st->frame >= st->plan.frame_count) {
      st->plan = synth::plan_clip(st->renderer.spec(), static_cast<int>(uniform_index(st->rng, st->total)));
      st->frame = 0;
    }
    out.timestamp = static_cast<double>(st->emitted) / st->renderer.spec().fps;
    out.rgb = st->renderer.render(st->plan, Modality::Rgb, st->frame);
    out.ir = st->renderer.render(st->plan, Modality::Ir, st->frame);
    out.depth = st->renderer.render(st->plan, Modality::Depth, st->frame);
    ++st->frame;
    ++st->emitted;
    return true;
  };
}

}  // namespace dbm::runtime
