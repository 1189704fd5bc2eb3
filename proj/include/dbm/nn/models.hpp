#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "dbm/nn/layers.hpp"
#include "dbm/rng.hpp"

namespace dbm::nn {

/// Backbone description. The dense/light families are small stand-ins built from
/// the same block types (plain residual, inverted residual, channel shuffle);
/// tiny-2D/tiny-3D are the desk-scale models used for end-to-end runs.
struct BaseModelSpec {
  std::string family = "tiny-2D";
  int feature_dim = 64;
  int input_size = 112;
  int input_channels = 3;

  bool is_3d() const;
  /// Frames per segment input: 16 for 3D families, 1 otherwise.
  int clip_len() const { return is_3d() ? 16 : 1; }
  void validate() const;

  nlohmann::json to_json() const;
  static BaseModelSpec from_json(const nlohmann::json& j);
  bool operator==(const BaseModelSpec&) const = default;
};

std::vector<std::string> model_families();

/// Maps [N, input_channels, clip_len, S, S] to [N, feature_dim] (ReLU features).
Sequential build_backbone(const BaseModelSpec& spec);

/// He-normal weights (fan-in, ReLU gain), zero biases, unit BN scale.
void initialize(Layer& root, Rng& rng);

/// Freezes every batch-norm layer except the first one reached by visit().
void set_partial_bn(Layer& root, bool enabled);

/// Copy of `conv` for a different input channel count: kernel channels are
/// averaged and the mean is replicated to `channels`.
Conv adapt_input_channels(const Conv& conv, int channels);

/// First convolution reached by visit(), or nullptr.
Conv* first_conv(Layer& root);

}  // namespace dbm::nn
