#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dbm/framestore.hpp"
#include "dbm/manifest.hpp"
#include "dbm/nn/head.hpp"
#include "dbm/nn/layers.hpp"
#include "dbm/nn/models.hpp"
#include "dbm/sampling.hpp"

namespace dbm::net {

/// Model input: a single modality or the data-level IR + depth stack.
enum class InputModality { Rgb, Ir, Depth, Ird };
std::string to_string(InputModality m);
InputModality parse_input_modality(const std::string& s);
int channels(InputModality m);

/// Stacks aligned IR and depth frames into a 2-channel frame, order [IR, DEPTH].
FrameTensor fuse_ird(const FrameTensor& ir, const QuantizedFrame& depth);

/// Channel-stacks frames of several modalities. RGB is not pixel-aligned with
/// IR/depth, so mixing it with them needs `calibrated`.
FrameTensor fuse_data_level(const std::vector<std::pair<Modality, FrameTensor>>& frames, bool calibrated = false);

struct ModelConfig {
  nn::BaseModelSpec base;
  InputModality modality = InputModality::Rgb;
  int n_segments = 4;
  nn::Consensus consensus = nn::Consensus::MaxP;
  int num_classes = 13;
  double dropout = 0.5;
  int hidden = 64;
  /// MaxP experiment flag: pool groups of this many segments (0 = whole axis).
  int pool_kernel = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  nn::Sequential& backbone() { return backbone_; }
  nn::ConsensusHead& head() { return head_; }

  void initialize(std::uint64_t seed);
  void set_partial_bn(bool enabled) { nn::set_partial_bn(backbone_, enabled); }

  /// Shape of one clip's input, [N_s, C, T, S, S].
  nn::Shape clip_shape() const;

  /// Eval-mode features of one clip; column j is computed from segment j alone.
  nn::FeatureMatrix extract_features(const nn::Tensor& segments);
  /// Eval-mode class scores of one clip.
  nn::Vec predict(const nn::Tensor& segments);
  /// Eval-mode scores for several clips stacked along N.
  std::vector<nn::Vec> predict_batch(const nn::Tensor& clips);

  std::vector<nn::Param*> params();
  std::vector<nn::Buffer> buffers();
  std::vector<nn::DParam*> head_params() { return head_.params(); }

 private:
  ModelConfig cfg_;
  nn::Sequential backbone_;
  nn::ConsensusHead head_;
};

/// Maps uint8 pixels to roughly zero-mean unit-range floats.
inline float normalize_pixel(std::uint8_t v) { return static_cast<float>(v) * (4.0f / 255.0f) - 2.0f; }

/// One frame of `modality` at prep resolution.
FrameTensor load_input_frame(const FrameStore& store, const ClipRecord& clip, InputModality modality, int index);

/// Frame indices per segment: one index for 2D models, clip_len indices for 3D.
std::vector<std::vector<int>> sample_input_indices(int frame_count, const ModelConfig& cfg, bool train,
                                                   std::uint64_t seed);

/// Samples, crops and normalizes one clip into [N_s, C, T, S, S] written at `dst`.
/// Train mode draws temporal positions and one crop shared by all frames of the clip.
void build_clip_input(const FrameStore& store, const ClipRecord& clip, const ModelConfig& cfg, bool train,
                      std::uint64_t seed, const sampling::ScaleJitter& jitter, float* dst);
nn::Tensor build_clip_input(const FrameStore& store, const ClipRecord& clip, const ModelConfig& cfg, bool train,
                            std::uint64_t seed, const sampling::ScaleJitter& jitter = {});

struct TrainConfig {
  double lr = 0.001;
  double momentum = 0.9;
  double dampening = 0.0;
  double weight_decay = 5e-4;
  double lr_decay_factor = 0.1;
  std::vector<int> decay_epochs{15, 30};
  int max_epochs = 40;
  int batch = 32;
  bool partial_batchnorm = false;
  sampling::ScaleJitter jitter;

  static TrainConfig preset_2d();
  /// lr 0.1 decayed at 20 and 35, stopping 10 epochs after the second decay.
  static TrainConfig preset_3d();
  double lr_at(int epoch) const;
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;
};
nlohmann::json to_json(const EpochRecord& r);

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_acc = 0.0;
};

/// Trains on the TRAIN partition and validates on VAL after every epoch. The
/// model ends up holding the weights of the best validation epoch (first one
/// on ties). Throws DivergenceError on a non-finite loss.
TrainResult train(Model& model, const DatasetManifest& m, const FrameStore& store, const TrainConfig& cfg,
                  std::uint64_t seed, const std::function<void(const EpochRecord&)>& on_epoch = {});

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  /// confusion[true][predicted]
  std::vector<std::vector<std::int64_t>> confusion;
  std::vector<std::string> clip_ids;
  std::vector<int> labels;
  std::vector<int> predictions;
  std::vector<nn::Vec> scores;
};

/// Builds the confusion matrix from per-clip scores; argmax ties go to the lowest class id.
EvalResult score_predictions(const std::vector<int>& labels, const std::vector<nn::Vec>& scores, int num_classes);

EvalResult evaluate(Model& model, const std::vector<ClipRecord>& clips, const FrameStore& store,
                    const sampling::ScaleJitter& jitter = {});
EvalResult evaluate(Model& model, const DatasetManifest& m, Partition p, const FrameStore& store,
                    const sampling::ScaleJitter& jitter = {});

nlohmann::json to_json(const EvalResult& r, bool with_scores = false);
EvalResult eval_result_from_json(const nlohmann::json& j);

struct CheckpointInfo {
  nlohmann::json train_config;
  std::uint64_t seed = 0;
  std::string config_hash;
  int epoch = 0;
  double val_acc = 0.0;
};

/// Line-delimited checkpoint: a header record, then one record per tensor.
void save_checkpoint(Model& model, const std::filesystem::path& path, const CheckpointInfo& info);
Model load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

/// Copies backbone weights from a 3-channel model, adapting the first convolution
/// to `target`'s input channel count. Architectures must otherwise match.
void init_from_pretrained(Model& target, Model& source);

}  // namespace dbm::net
