#include "dbm/nn/models.hpp"

#include <algorithm>
#include <cmath>

#include "dbm/error.hpp"

namespace dbm::nn {

using nlohmann::json;

namespace {

const std::vector<std::string> kFamilies{"tiny-2D",    "dense-2D",   "light-2D-a", "light-2D-b",
                                         "tiny-3D",    "dense-3D",   "light-3D-a", "light-3D-b"};

// Kernel helpers: 2D families use a unit temporal extent.
struct Geometry {
  bool three_d;
  Dim3 k(int s) const { return {three_d ? 3 : 1, s, s}; }
  Dim3 one() const { return {1, 1, 1}; }
  Dim3 pad(int p) const { return {three_d ? 1 : 0, p, p}; }
  Dim3 stride(int s, bool temporal = true) const { return {three_d && temporal ? 2 : 1, s, s}; }
};

void conv_bn_relu(Sequential& s, int in, int out, Dim3 k, Dim3 stride, Dim3 pad, int groups = 1, bool relu = true) {
  s.emplace<Conv>(in, out, k, stride, pad, groups);
  s.emplace<BatchNorm>(out);
  if (relu) s.emplace<ReLU>();
}

Sequential basic_block(const Geometry& g, int ch) {
  Sequential b;
  conv_bn_relu(b, ch, ch, g.k(3), g.one(), g.pad(1));
  conv_bn_relu(b, ch, ch, g.k(3), g.one(), g.pad(1), 1, false);
  return b;
}

Sequential inverted_residual(const Geometry& g, int ch, int expand) {
  Sequential b;
  conv_bn_relu(b, ch, ch * expand, g.one(), g.one(), {0, 0, 0});
  conv_bn_relu(b, ch * expand, ch * expand, g.k(3), g.one(), g.pad(1), ch * expand);
  conv_bn_relu(b, ch * expand, ch, g.one(), g.one(), {0, 0, 0}, 1, false);
  return b;
}

Sequential shuffle_branch(const Geometry& g, int half) {
  Sequential b;
  conv_bn_relu(b, half, half, g.one(), g.one(), {0, 0, 0});
  conv_bn_relu(b, half, half, g.k(3), g.one(), g.pad(1), half, false);
  conv_bn_relu(b, half, half, g.one(), g.one(), {0, 0, 0});
  return b;
}

void head_features(Sequential& s, int channels, int grid, int feature_dim) {
  s.emplace<GridPool>(grid);
  s.emplace<Flatten>();
  s.emplace<Linear>(channels * grid * grid, feature_dim);
  s.emplace<ReLU>();
}

}  // namespace

bool BaseModelSpec::is_3d() const { return family.find("3D") != std::string::npos; }

void BaseModelSpec::validate() const {
  if (std::find(kFamilies.begin(), kFamilies.end(), family) == kFamilies.end()) {
    throw SchemaError("unknown model family '" + family + "'");
  }
  if (feature_dim < 1) throw ContractError("feature_dim must be at least 1");
  if (input_channels < 1) throw ContractError("input_channels must be at least 1");
  if (input_size < 28 || input_size % 28 != 0) {
    throw ContractError("input_size must be a positive multiple of 28 (112 or 224)");
  }
}

json BaseModelSpec::to_json() const {
  return {{"family", family}, {"feature_dim", feature_dim}, {"input_size", input_size},
          {"input_channels", input_channels}};
}

BaseModelSpec BaseModelSpec::from_json(const json& j) {
  BaseModelSpec s;
  s.family = j.at("family").get<std::string>();
  s.feature_dim = j.at("feature_dim").get<int>();
  s.input_size = j.at("input_size").get<int>();
  s.input_channels = j.at("input_channels").get<int>();
  s.validate();
  return s;
}

std::vector<std::string> model_families() { return kFamilies; }

Sequential build_backbone(const BaseModelSpec& spec) {
  spec.validate();
  const Geometry g{spec.is_3d()};
  const int c = spec.input_channels;
  const int stem = spec.input_size / 28;  // every family works on a 28 x 28 grid after the stem
  Sequential s;
  s.emplace<AvgPool>(Dim3{1, stem, stem});

  const std::string base = spec.family.substr(0, spec.family.find('-'));
  const std::string variant = spec.family.substr(spec.family.rfind('-') + 1);
  if (base == "tiny") {
    conv_bn_relu(s, c, 8, g.k(3), g.one(), g.pad(1));
    s.emplace<MaxPool>(Dim3{g.three_d ? 2 : 1, 2, 2}, Dim3{g.three_d ? 2 : 1, 2, 2});
    conv_bn_relu(s, 8, 16, g.k(3), g.one(), g.pad(1));
    s.emplace<MaxPool>(Dim3{g.three_d ? 2 : 1, 2, 2}, Dim3{g.three_d ? 2 : 1, 2, 2});
    head_features(s, 16, 7, spec.feature_dim);
  } else if (base == "dense") {
    conv_bn_relu(s, c, 16, g.k(3), g.stride(2), g.pad(1));
    s.emplace<Residual>(basic_block(g, 16));
    s.emplace<Residual>(basic_block(g, 16));
    conv_bn_relu(s, 16, 32, g.k(3), g.stride(2), g.pad(1));
    s.emplace<Residual>(basic_block(g, 32));
    head_features(s, 32, 2, spec.feature_dim);
  } else if (base == "light" && variant == "a") {
    conv_bn_relu(s, c, 16, g.k(3), g.stride(2), g.pad(1));
    s.emplace<Residual>(inverted_residual(g, 16, 3));
    conv_bn_relu(s, 16, 16, g.k(3), g.stride(2), g.pad(1), 16);
    conv_bn_relu(s, 16, 32, g.one(), g.one(), {0, 0, 0});
    s.emplace<Residual>(inverted_residual(g, 32, 3));
    head_features(s, 32, 2, spec.feature_dim);
  } else {
    conv_bn_relu(s, c, 16, g.k(3), g.stride(2), g.pad(1));
    s.emplace<ShuffleUnit>(shuffle_branch(g, 8));
    s.emplace<ShuffleUnit>(shuffle_branch(g, 8));
    conv_bn_relu(s, 16, 32, g.k(3), g.stride(2), g.pad(1));
    s.emplace<ShuffleUnit>(shuffle_branch(g, 16));
    head_features(s, 32, 2, spec.feature_dim);
  }
  return s;
}

void initialize(Layer& root, Rng& rng) {
  root.visit([&](Layer& l) {
    if (auto* conv = dynamic_cast<Conv*>(&l)) {
      const Dim3 k = conv->kernel();
      const double fan_in = static_cast<double>(conv->in_channels() / conv->groups()) * k[0] * k[1] * k[2];
      const double sd = std::sqrt(2.0 / fan_in);
      for (auto& w : conv->weight().value.data) w = static_cast<float>(normal(rng, 0.0, sd));
      if (conv->has_bias()) std::fill(conv->bias().value.data.begin(), conv->bias().value.data.end(), 0.0f);
    } else if (auto* lin = dynamic_cast<Linear*>(&l)) {
      const double sd = std::sqrt(2.0 / lin->in_features());
      for (auto& w : lin->weight().value.data) w = static_cast<float>(normal(rng, 0.0, sd));
      std::fill(lin->bias().value.data.begin(), lin->bias().value.data.end(), 0.0f);
    }
  });
}

void set_partial_bn(Layer& root, bool enabled) {
  bool first = true;
  root.visit([&](Layer& l) {
    if (auto* bn = dynamic_cast<BatchNorm*>(&l)) {
      bn->set_frozen(enabled && !first);
      first = false;
    }
  });
}

Conv adapt_input_channels(const Conv& conv, int channels) {
  if (conv.groups() != 1) throw ContractError("channel adaptation needs an ungrouped convolution");
  Conv out(channels, conv.out_channels(), conv.kernel(), conv.stride(), conv.pad(), 1, conv.has_bias());
  const Dim3 k = conv.kernel();
  const std::size_t kv = static_cast<std::size_t>(k[0]) * k[1] * k[2];
  const int in = conv.in_channels();
  const auto& src = conv.weight().value.data;
  auto& dst = out.weight().value.data;
  for (int o = 0; o < conv.out_channels(); ++o) {
    for (std::size_t e = 0; e < kv; ++e) {
      double mean = 0.0;
      for (int c = 0; c < in; ++c) mean += src[(static_cast<std::size_t>(o) * in + c) * kv + e];
      mean /= in;
      for (int c = 0; c < channels; ++c) dst[(static_cast<std::size_t>(o) * channels + c) * kv + e] = static_cast<float>(mean);
    }
  }
  if (conv.has_bias()) out.bias().value = conv.bias().value;
  return out;
}

Conv* first_conv(Layer& root) {
  Conv* found = nullptr;
  root.visit([&](Layer& l) {
    if (found == nullptr) found = dynamic_cast<Conv*>(&l);
  });
  return found;
}

}  // namespace dbm::nn
