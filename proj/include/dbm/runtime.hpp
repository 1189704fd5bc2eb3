#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dbm/fusion.hpp"
#include "dbm/image.hpp"
#include "dbm/manifest.hpp"
#include "dbm/net.hpp"
#include "dbm/synth.hpp"

namespace dbm::runtime {

/// Synchronized frames of one instant. Absent modalities are empty images;
/// depth is quantized.
struct FrameTriplet {
  double timestamp = 0.0;  // seconds
  FrameTensor rgb, ir, depth;

  const FrameTensor& get(Modality m) const;
};

/// Immutable view of a full window handed to inference.
struct WindowSnapshot {
  std::shared_ptr<const std::vector<FrameTriplet>> frames;
  /// 1-based number of the newest frame in the window.
  std::int64_t end_frame = 0;
  double timestamp = 0.0;
};

/// Fixed-span frame buffer that emits a window every `stride` frames once full.
class SlidingWindow {
 public:
  explicit SlidingWindow(int span = 50, int stride = 15);

  /// Throws SequencingError when the timestamp does not increase.
  std::optional<WindowSnapshot> push(FrameTriplet frame);

  int span() const { return span_; }
  int stride() const { return stride_; }
  std::int64_t frames_seen() const { return count_; }
  std::size_t buffered() const { return buffer_.size(); }

 private:
  int span_, stride_;
  std::int64_t count_ = 0;
  std::optional<double> last_ts_;
  std::deque<FrameTriplet> buffer_;
};

/// Groups frames from independent modality streams by nearest timestamp
/// within half a frame period. Frames left without a partner are dropped.
class FrameSynchronizer {
 public:
  FrameSynchronizer(std::vector<Modality> modalities, double fps = 30.0);

  /// Returns every triplet that became complete.
  std::vector<FrameTriplet> push(Modality m, double timestamp, FrameTensor frame);
  std::int64_t dropped() const { return dropped_; }

 private:
  struct Item {
    double ts;
    FrameTensor frame;
  };
  std::vector<Modality> modalities_;
  double half_period_;
  std::map<Modality, std::deque<Item>> queues_;
  std::map<Modality, double> last_ts_;
  std::int64_t dropped_ = 0;
};

/// Executes one exported or reference model on prepared clip input.
class InferenceBackend {
 public:
  virtual ~InferenceBackend() = default;
  virtual std::string name() const = 0;
  virtual const net::ModelConfig& config() const = 0;
  /// Class scores for one clip input of shape [N_s, C, T, S, S].
  virtual nn::Vec run(const nn::Tensor& clip) = 0;
};

/// Runs the training-framework model in eval mode.
class ReferenceBackend final : public InferenceBackend {
 public:
  explicit ReferenceBackend(net::Model model) : model_(std::move(model)) {}
  std::string name() const override { return "reference"; }
  const net::ModelConfig& config() const override { return model_.config(); }
  nn::Vec run(const nn::Tensor& clip) override { return model_.predict(clip); }

 private:
  net::Model model_;
};

/// Inference-only form of a model: batch norms folded into the preceding
/// convolutions, dropout removed, and a plain direct-convolution executor.
class FoldedBackend final : public InferenceBackend {
 public:
  std::string name() const override { return "folded"; }
  const net::ModelConfig& config() const override { return cfg_; }
  nn::Vec run(const nn::Tensor& clip) override;

  static FoldedBackend export_model(net::Model& model);
  void save(const std::filesystem::path& path) const;
  static FoldedBackend load(const std::filesystem::path& path);

  struct Op;
  FoldedBackend();
  ~FoldedBackend() override;
  FoldedBackend(FoldedBackend&&) noexcept;
  FoldedBackend& operator=(FoldedBackend&&) noexcept;

 private:
  net::ModelConfig cfg_;
  std::vector<std::unique_ptr<Op>> ops_;
  nn::ConsensusHead head_;
};

/// One configured classifier stream of the pipeline.
struct Stream {
  std::string name;
  std::shared_ptr<InferenceBackend> backend;
  fusion::ValidationStats stats;  // used by Bayesian and DST fusion
};

struct StageTimes {
  double sampling_ms = 0.0;
  std::vector<double> stream_ms;
  double fusion_ms = 0.0;
  double total_ms = 0.0;
};

struct WindowResult {
  int label = -1;
  fusion::Scores scores;
  StageTimes times;
  std::vector<std::string> dropped_streams;
  std::vector<std::string> warnings;
  std::int64_t end_frame = 0;
  double timestamp = 0.0;
};

/// Centered segment sampling over the window, every stream, then decision
/// fusion. A failing stream is dropped with a warning; InferenceError when all fail.
WindowResult infer_window(const WindowSnapshot& window, std::vector<Stream>& streams, fusion::Method method);

nlohmann::json to_json(const WindowResult& r, const std::vector<Stream>& streams);

struct Percentiles {
  double p50 = 0.0, p95 = 0.0, p99 = 0.0, mean = 0.0, max = 0.0;
};
/// Nearest-rank percentiles.
Percentiles percentiles(std::vector<double> samples);

struct LatencyReport {
  int windows = 0;
  int stride = 15;
  double fps = 30.0;
  Percentiles sampling, fusion, total;
  std::vector<std::string> stream_names;
  std::vector<Percentiles> streams;
  double windows_per_second = 0.0;
  double budget_ms = 0.0;
  bool real_time = false;
};

/// Aggregates per-window timings; real time means p95 total within stride / fps.
LatencyReport summarize(const std::vector<StageTimes>& times, const std::vector<std::string>& stream_names, int stride,
                        double fps);

/// Produces the next synchronized frame of a source; returns false when exhausted.
using FrameSource = std::function<bool(FrameTriplet&)>;

LatencyReport benchmark(std::vector<Stream>& streams, fusion::Method method, int n_windows, const FrameSource& source,
                        int stride = 15, double fps = 30.0);

nlohmann::json to_json(const LatencyReport& r);

/// Endless synthetic camera: generated clips of the given spec played back to back.
FrameSource synthetic_source(const synth::SynthSpec& spec, std::uint64_t seed);

}  // namespace dbm::runtime
