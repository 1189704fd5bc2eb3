#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dbm/nn/tensor.hpp"
#include "dbm/rng.hpp"

namespace dbm::nn {

enum class Mode { Train, Eval };

struct Context {
  Mode mode = Mode::Eval;
  Rng* rng = nullptr;  // required by Dropout in Train mode
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor velocity;
  bool trainable = true;
  bool decay = true;  // weight decay applies
};

/// A named non-trainable tensor (batch-norm running statistics).
struct Buffer {
  std::string name;
  Tensor* value;
};

/// Three-component size used for kernels, strides and padding (t, h, w).
using Dim3 = std::array<int, 3>;

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  /// Caches whatever backward needs; backward must follow the matching forward.
  virtual Tensor forward(const Tensor& x, const Context& ctx) = 0;
  /// Returns dL/dx and accumulates parameter gradients.
  virtual Tensor backward(const Tensor& grad) = 0;

  virtual void collect_params(const std::string& /*prefix*/, std::vector<Param*>& /*out*/) {}
  virtual void collect_buffers(const std::string& /*prefix*/, std::vector<Buffer>& /*out*/) {}
  /// Architecture description; make_layer(config()) rebuilds an equivalent layer.
  virtual nlohmann::json config() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;
  /// Visits this layer and every nested layer in definition order.
  virtual void visit(const std::function<void(Layer&)>& fn) { fn(*this); }
};

using LayerPtr = std::unique_ptr<Layer>;

class Conv final : public Layer {
 public:
  Conv(int in_channels, int out_channels, Dim3 kernel, Dim3 stride = {1, 1, 1}, Dim3 pad = {0, 0, 0},
       int groups = 1, bool bias = false);

  std::string kind() const override { return "conv"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad) override;
  void collect_params(const std::string& prefix, std::vector<Param*>& out) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv>(*this); }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int groups() const { return groups_; }
  Dim3 kernel() const { return kernel_; }
  Dim3 stride() const { return stride_; }
  Dim3 pad() const { return pad_; }
  bool has_bias() const { return has_bias_; }
  Param& weight() { return weight_; }
  const Param& weight() const { return weight_; }
  Param& bias() { return bias_; }
  const Param& bias() const { return bias_; }

 private:
  bool pointwise() const;
  void im2col(const float* x, const Shape& in, int group, float* col) const;
  void col2im(const float* col, const Shape& in, int group, float* dx) const;

  int in_, out_, groups_;
  Dim3 kernel_, stride_, pad_;
  bool has_bias_;
  Param weight_;  // [out, in/groups, kt, kh, kw]
  Param bias_;    // [out]
  Tensor input_;
};

class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(int channels, float momentum = 0.1f, float eps = 1e-5f);

  std::string kind() const override { return "batchnorm"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad) override;
  void collect_params(const std::string& prefix, std::vector<Param*>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<Buffer>& out) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }

  /// Frozen layers normalize with running statistics, never update them, and
  /// keep their affine parameters fixed.
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }

  int channels() const { return channels_; }
  float eps() const { return eps_; }
  const Param& gamma() const { return gamma_; }
  const Param& beta() const { return beta_; }
  const Tensor& running_mean() const { return running_mean_; }
  const Tensor& running_var() const { return running_var_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }

 private:
  int channels_;
  float momentum_, eps_;
  bool frozen_ = false;
  Param gamma_, beta_;
  Tensor running_mean_, running_var_;
  // backward cache
  bool used_batch_stats_ = false;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

class ReLU final : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad) override;
  nlohmann::json config() const override { return {{"type", kind()}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }

 private:
  Tensor output_;
};

class MaxPool final : public Layer {
 public:
  MaxPool(Dim3 kernel, Dim3 stride);

  std::string kind() const override { return "maxpool"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool>(*this); }
  Dim3 kernel() const { return kernel_; }
  Dim3 stride() const { return stride_; }

 private:
  Dim3 kernel_, stride_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

/// Non-overlapping average pooling (kernel == stride).
class AvgPool final : public Layer {
 public:
  explicit AvgPool(Dim3 kernel);

  std::string kind() const override { return "avgpool"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<AvgPool>(*this); }
  Dim3 kernel() const { return kernel_; }

 private:
  Dim3 kernel_;
  Shape in_shape_;
};

/// Adaptive average pooling to a g x g spatial grid; the temporal axis is averaged out.
class GridPool final : public Layer {
 public:
  explicit GridPool(int grid);

  std::string kind() const override { return "gridpool"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GridPool>(*this); }
  int grid() const { return grid_; }

 private:
  int grid_;
  Shape in_shape_;
};

class Flatten final : public Layer {
 public:
  std::string kind() const override { return "flatten"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad) override;
  nlohmann::json config() const override { return {{"type", kind()}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }

 private:
  Shape in_shape_;
};

/// Fully connected layer over the flattened per-sample activation.
class Linear final : public Layer {
 public:
  Linear(int in_features, int out_features);

  std::string kind() const override { return "linear"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad) override;
  void collect_params(const std::string& prefix, std::vector<Param*>& out) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Param& weight() { return weight_; }
  const Param& weight() const { return weight_; }
  Param& bias() { return bias_; }
  const Param& bias() const { return bias_; }

 private:
  int in_, out_;
  Param weight_;  // [out, in]
  Param bias_;    // [out]
  Tensor input_;
};

class Dropout final : public Layer {
 public:
  explicit Dropout(float p);

  std::string kind() const override { return "dropout"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }
  float p() const { return p_; }

 private:
  float p_;
  std::vector<float> mask_;
};

class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  Sequential& add(LayerPtr layer);
  template <typename L, typename... Args>
  Sequential& emplace(Args&&... args) {
    return add(std::make_unique<L>(std::forward<Args>(args)...));
  }

  std::string kind() const override { return "sequential"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad) override;
  void collect_params(const std::string& prefix, std::vector<Param*>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<Buffer>& out) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sequential>(*this); }
  void visit(const std::function<void(Layer&)>& fn) override;

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_[i]; }
  const Layer& at(std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<LayerPtr> layers_;
};

/// y = x + body(x); body must preserve the shape.
class Residual final : public Layer {
 public:
  explicit Residual(Sequential body);

  std::string kind() const override { return "residual"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad) override;
  void collect_params(const std::string& prefix, std::vector<Param*>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<Buffer>& out) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Residual>(*this); }
  void visit(const std::function<void(Layer&)>& fn) override;
  Sequential& body() { return body_; }
  const Sequential& body() const { return body_; }

 private:
  Sequential body_;
};

/// Stride-1 ShuffleNet-v2 unit: the channels are split in half, the second half
/// goes through `branch`, the halves are concatenated and shuffled in 2 groups.
class ShuffleUnit final : public Layer {
 public:
  explicit ShuffleUnit(Sequential branch);

  std::string kind() const override { return "shuffle"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad) override;
  void collect_params(const std::string& prefix, std::vector<Param*>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<Buffer>& out) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ShuffleUnit>(*this); }
  void visit(const std::function<void(Layer&)>& fn) override;
  Sequential& branch() { return branch_; }
  const Sequential& branch() const { return branch_; }

 private:
  Sequential branch_;
  Shape in_shape_;
};

/// Splits x into its first and second channel halves.
std::pair<Tensor, Tensor> split_channels(const Tensor& x);
/// Concatenates a and b along channels, then shuffles with 2 groups.
Tensor concat_shuffle(const Tensor& a, const Tensor& b);

LayerPtr make_layer(const nlohmann::json& config);

}  // namespace dbm::nn
