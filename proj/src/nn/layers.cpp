#include "dbm/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dbm/error.hpp"

namespace dbm::nn {

using nlohmann::json;

namespace {

Param make_param(const std::string& name, Shape shape, float fill, bool decay) {
  Param p;
  p.name = name;
  p.value = Tensor(shape, fill);
  p.grad = Tensor(shape, 0.0f);
  p.velocity = Tensor(shape, 0.0f);
  p.decay = decay;
  return p;
}

void push_param(Param& p, const std::string& prefix, std::vector<Param*>& out) {
  p.name = prefix + p.name.substr(p.name.rfind('.') == std::string::npos ? 0 : p.name.rfind('.') + 1);
  out.push_back(&p);
}

json dim3(const Dim3& d) { return json::array({d[0], d[1], d[2]}); }
Dim3 dim3(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()}; }

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

}  // namespace

// ---------------------------------------------------------------------------- Conv

Conv::Conv(int in_channels, int out_channels, Dim3 kernel, Dim3 stride, Dim3 pad, int groups, bool bias)
    : in_(in_channels),
      out_(out_channels),
      groups_(groups),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      has_bias_(bias) {
  require_shape(groups >= 1 && in_channels % groups == 0 && out_channels % groups == 0,
                "conv channels must be divisible by groups");
  weight_ = make_param("weight", Shape{out_, in_ / groups_, kernel_[0], kernel_[1], kernel_[2]}, 0.0f, true);
  if (has_bias_) bias_ = make_param("bias", Shape{out_}, 0.0f, false);
}

bool Conv::pointwise() const {
  return kernel_ == Dim3{1, 1, 1} && stride_ == Dim3{1, 1, 1} && pad_ == Dim3{0, 0, 0};
}

Shape Conv::output_shape(const Shape& in) const {
  require_shape(in.c == in_, "conv expects " + std::to_string(in_) + " input channels, got " + in.str());
  Shape o{in.n, out_, (in.t + 2 * pad_[0] - kernel_[0]) / stride_[0] + 1,
          (in.h + 2 * pad_[1] - kernel_[1]) / stride_[1] + 1, (in.w + 2 * pad_[2] - kernel_[2]) / stride_[2] + 1};
  require_shape(o.t >= 1 && o.h >= 1 && o.w >= 1, "conv input " + in.str() + " smaller than its kernel");
  return o;
}

void Conv::im2col(const float* x, const Shape& in, int group, float* col) const {
  const Shape o = output_shape(in);
  const int cin = in_ / groups_;
  const int kt = kernel_[0], kh = kernel_[1], kw = kernel_[2];
  const std::size_t plane = in.spatial();
  const std::size_t p_count = o.spatial();
  std::size_t row = 0;
  for (int ci = 0; ci < cin; ++ci) {
    const float* xc = x + (static_cast<std::size_t>(group) * cin + ci) * plane;
    for (int a = 0; a < kt; ++a) {
      for (int b = 0; b < kh; ++b) {
        for (int d = 0; d < kw; ++d, ++row) {
          float* dst = col + row * p_count;
          for (int ot = 0; ot < o.t; ++ot) {
            const int it = ot * stride_[0] - pad_[0] + a;
            for (int oh = 0; oh < o.h; ++oh) {
              const int ih = oh * stride_[1] - pad_[1] + b;
              float* drow = dst + (static_cast<std::size_t>(ot) * o.h + oh) * o.w;
              if (it < 0 || it >= in.t || ih < 0 || ih >= in.h) {
                std::fill(drow, drow + o.w, 0.0f);
                continue;
              }
              const float* srow = xc + (static_cast<std::size_t>(it) * in.h + ih) * in.w;
              for (int ow = 0; ow < o.w; ++ow) {
                const int iw = ow * stride_[2] - pad_[2] + d;
                drow[ow] = (iw >= 0 && iw < in.w) ? srow[iw] : 0.0f;
              }
            }
          }
        }
      }
    }
  }
}

void Conv::col2im(const float* col, const Shape& in, int group, float* dx) const {
  const Shape o = output_shape(in);
  const int cin = in_ / groups_;
  const int kt = kernel_[0], kh = kernel_[1], kw = kernel_[2];
  const std::size_t plane = in.spatial();
  const std::size_t p_count = o.spatial();
  std::size_t row = 0;
  for (int ci = 0; ci < cin; ++ci) {
    float* xc = dx + (static_cast<std::size_t>(group) * cin + ci) * plane;
    for (int a = 0; a < kt; ++a) {
      for (int b = 0; b < kh; ++b) {
        for (int d = 0; d < kw; ++d, ++row) {
          const float* src = col + row * p_count;
          for (int ot = 0; ot < o.t; ++ot) {
            const int it = ot * stride_[0] - pad_[0] + a;
            if (it < 0 || it >= in.t) continue;
            for (int oh = 0; oh < o.h; ++oh) {
              const int ih = oh * stride_[1] - pad_[1] + b;
              if (ih < 0 || ih >= in.h) continue;
              const float* srow = src + (static_cast<std::size_t>(ot) * o.h + oh) * o.w;
              float* drow = xc + (static_cast<std::size_t>(it) * in.h + ih) * in.w;
              for (int ow = 0; ow < o.w; ++ow) {
                const int iw = ow * stride_[2] - pad_[2] + d;
                if (iw >= 0 && iw < in.w) drow[iw] += srow[ow];
              }
            }
          }
        }
      }
    }
  }
}

Tensor Conv::forward(const Tensor& x, const Context&) {
  const Shape o = output_shape(x.shape);
  input_ = x;
  Tensor out(o);
  const int cin = in_ / groups_;
  const int cout = out_ / groups_;
  const int k = cin * kernel_[0] * kernel_[1] * kernel_[2];
  const int p = static_cast<int>(o.spatial());
  std::vector<float> col(pointwise() ? 0 : static_cast<std::size_t>(k) * p);
  for (int n = 0; n < x.shape.n; ++n) {
    for (int g = 0; g < groups_; ++g) {
      const float* colp;
      if (pointwise()) {
        colp = x.sample(n) + static_cast<std::size_t>(g) * cin * x.shape.spatial();
      } else {
        im2col(x.sample(n), x.shape, g, col.data());
        colp = col.data();
      }
      const float* wg = weight_.value.data.data() + static_cast<std::size_t>(g) * cout * k;
      float* og = out.sample(n) + static_cast<std::size_t>(g) * cout * p;
      gemm_nn(cout, p, k, wg, colp, og);
    }
    if (has_bias_) {
      for (int c = 0; c < out_; ++c) {
        float* oc = out.sample(n) + static_cast<std::size_t>(c) * p;
        const float b = bias_.value.data[c];
        for (int i = 0; i < p; ++i) oc[i] += b;
      }
    }
  }
  return out;
}

Tensor Conv::backward(const Tensor& grad) {
  const Shape& in = input_.shape;
  const Shape o = output_shape(in);
  require_shape(grad.shape == o, "conv backward gradient shape mismatch");
  Tensor dx(in);
  const int cin = in_ / groups_;
  const int cout = out_ / groups_;
  const int k = cin * kernel_[0] * kernel_[1] * kernel_[2];
  const int p = static_cast<int>(o.spatial());
  std::vector<float> col(pointwise() ? 0 : static_cast<std::size_t>(k) * p);
  std::vector<float> dcol(static_cast<std::size_t>(k) * p);
  for (int n = 0; n < in.n; ++n) {
    for (int g = 0; g < groups_; ++g) {
      const float* colp;
      if (pointwise()) {
        colp = input_.sample(n) + static_cast<std::size_t>(g) * cin * in.spatial();
      } else {
        im2col(input_.sample(n), in, g, col.data());
        colp = col.data();
      }
      const float* dog = grad.sample(n) + static_cast<std::size_t>(g) * cout * p;
      const float* wg = weight_.value.data.data() + static_cast<std::size_t>(g) * cout * k;
      float* dwg = weight_.grad.data.data() + static_cast<std::size_t>(g) * cout * k;
      gemm_nt(cout, k, p, dog, colp, dwg);
      if (pointwise()) {
        float* dxg = dx.sample(n) + static_cast<std::size_t>(g) * cin * in.spatial();
        gemm_tn(k, p, cout, wg, dog, dxg);
      } else {
        std::fill(dcol.begin(), dcol.end(), 0.0f);
        gemm_tn(k, p, cout, wg, dog, dcol.data());
        col2im(dcol.data(), in, g, dx.sample(n));
      }
    }
    if (has_bias_) {
      for (int c = 0; c < out_; ++c) {
        const float* gc = grad.sample(n) + static_cast<std::size_t>(c) * p;
        float s = 0.0f;
        for (int i = 0; i < p; ++i) s += gc[i];
        bias_.grad.data[c] += s;
      }
    }
  }
  return dx;
}

void Conv::collect_params(const std::string& prefix, std::vector<Param*>& out) {
  push_param(weight_, prefix, out);
  if (has_bias_) push_param(bias_, prefix, out);
}

json Conv::config() const {
  return {{"type", kind()},          {"in", in_},         {"out", out_},           {"kernel", dim3(kernel_)},
          {"stride", dim3(stride_)}, {"pad", dim3(pad_)}, {"groups", groups_}, {"bias", has_bias_}};
}

// ---------------------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(int channels, float momentum, float eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  gamma_ = make_param("gamma", Shape{channels}, 1.0f, false);
  beta_ = make_param("beta", Shape{channels}, 0.0f, false);
  running_mean_ = Tensor(Shape{channels}, 0.0f);
  running_var_ = Tensor(Shape{channels}, 1.0f);
}

void BatchNorm::set_frozen(bool frozen) {
  frozen_ = frozen;
  gamma_.trainable = !frozen;
  beta_.trainable = !frozen;
}

Tensor BatchNorm::forward(const Tensor& x, const Context& ctx) {
  require_shape(x.shape.c == channels_, "batchnorm expects " + std::to_string(channels_) + " channels, got " +
                                            x.shape.str());
  const std::size_t spatial = x.shape.spatial();
  const std::size_t count = static_cast<std::size_t>(x.shape.n) * spatial;
  used_batch_stats_ = ctx.mode == Mode::Train && !frozen_;
  if (used_batch_stats_ && count < 2) throw ContractError("batchnorm needs more than one value per channel");

  Tensor out(x.shape);
  xhat_ = Tensor(x.shape);
  inv_std_.assign(channels_, 0.0f);
  for (int c = 0; c < channels_; ++c) {
    float mean, var;
    if (used_batch_stats_) {
      double s = 0.0;
      for (int n = 0; n < x.shape.n; ++n) {
        const float* p = x.sample(n) + c * spatial;
        for (std::size_t i = 0; i < spatial; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double v = 0.0;
      for (int n = 0; n < x.shape.n; ++n) {
        const float* p = x.sample(n) + c * spatial;
        for (std::size_t i = 0; i < spatial; ++i) v += (p[i] - m) * (p[i] - m);
      }
      mean = static_cast<float>(m);
      var = static_cast<float>(v / static_cast<double>(count));
      const float unbiased = static_cast<float>(v / static_cast<double>(count - 1));
      running_mean_.data[c] = (1.0f - momentum_) * running_mean_.data[c] + momentum_ * mean;
      running_var_.data[c] = (1.0f - momentum_) * running_var_.data[c] + momentum_ * unbiased;
    } else {
      mean = running_mean_.data[c];
      var = running_var_.data[c];
    }
    const float inv = 1.0f / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const float g = gamma_.value.data[c];
    const float b = beta_.value.data[c];
    for (int n = 0; n < x.shape.n; ++n) {
      const float* p = x.sample(n) + c * spatial;
      float* xh = xhat_.sample(n) + c * spatial;
      float* o = out.sample(n) + c * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        xh[i] = (p[i] - mean) * inv;
        o[i] = g * xh[i] + b;
      }
    }
  }
  return out;
}

Tensor BatchNorm::backward(const Tensor& grad) {
  require_shape(grad.shape == xhat_.shape, "batchnorm backward gradient shape mismatch");
  const std::size_t spatial = grad.shape.spatial();
  const double count = static_cast<double>(grad.shape.n) * static_cast<double>(spatial);
  Tensor dx(grad.shape);
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < grad.shape.n; ++n) {
      const float* dy = grad.sample(n) + c * spatial;
      const float* xh = xhat_.sample(n) + c * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xh[i];
      }
    }
    if (gamma_.trainable) {
      gamma_.grad.data[c] += static_cast<float>(sum_dy_xhat);
      beta_.grad.data[c] += static_cast<float>(sum_dy);
    }
    const float g = gamma_.value.data[c];
    const float scale = g * inv_std_[c];
    for (int n = 0; n < grad.shape.n; ++n) {
      const float* dy = grad.sample(n) + c * spatial;
      const float* xh = xhat_.sample(n) + c * spatial;
      float* d = dx.sample(n) + c * spatial;
      if (used_batch_stats_) {
        const float mean_dy = static_cast<float>(sum_dy / count);
        const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / count);
        for (std::size_t i = 0; i < spatial; ++i) d[i] = scale * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
      } else {
        for (std::size_t i = 0; i < spatial; ++i) d[i] = scale * dy[i];
      }
    }
  }
  return dx;
}

void BatchNorm::collect_params(const std::string& prefix, std::vector<Param*>& out) {
  push_param(gamma_, prefix, out);
  push_param(beta_, prefix, out);
}

void BatchNorm::collect_buffers(const std::string& prefix, std::vector<Buffer>& out) {
  out.push_back({prefix + "running_mean", &running_mean_});
  out.push_back({prefix + "running_var", &running_var_});
}

json BatchNorm::config() const {
  return {{"type", kind()}, {"channels", channels_}, {"momentum", momentum_}, {"eps", eps_}};
}

// ---------------------------------------------------------------------------- ReLU

Tensor ReLU::forward(const Tensor& x, const Context&) {
  output_ = x;
  for (auto& v : output_.data) v = v > 0.0f ? v : 0.0f;
  return output_;
}

Tensor ReLU::backward(const Tensor& grad) {
  require_shape(grad.shape == output_.shape, "relu backward gradient shape mismatch");
  Tensor dx(grad.shape);
  for (std::size_t i = 0; i < grad.data.size(); ++i) dx.data[i] = output_.data[i] > 0.0f ? grad.data[i] : 0.0f;
  return dx;
}

// ---------------------------------------------------------------------------- MaxPool

MaxPool::MaxPool(Dim3 kernel, Dim3 stride) : kernel_(kernel), stride_(stride) {}

Shape MaxPool::output_shape(const Shape& in) const {
  Shape o{in.n, in.c, (in.t - kernel_[0]) / stride_[0] + 1, (in.h - kernel_[1]) / stride_[1] + 1,
          (in.w - kernel_[2]) / stride_[2] + 1};
  require_shape(in.t >= kernel_[0] && in.h >= kernel_[1] && in.w >= kernel_[2],
                "maxpool input " + in.str() + " smaller than its kernel");
  return o;
}

Tensor MaxPool::forward(const Tensor& x, const Context&) {
  const Shape o = output_shape(x.shape);
  in_shape_ = x.shape;
  Tensor out(o);
  argmax_.assign(o.numel(), 0);
  std::size_t oi = 0;
  for (int n = 0; n < o.n; ++n) {
    for (int c = 0; c < o.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * x.shape.c + c) * x.shape.spatial();
      for (int ot = 0; ot < o.t; ++ot) {
        for (int oh = 0; oh < o.h; ++oh) {
          for (int ow = 0; ow < o.w; ++ow, ++oi) {
            float best = -std::numeric_limits<float>::infinity();
            std::size_t best_i = base;
            for (int a = 0; a < kernel_[0]; ++a) {
              for (int b = 0; b < kernel_[1]; ++b) {
                for (int d = 0; d < kernel_[2]; ++d) {
                  const std::size_t idx =
                      base + (static_cast<std::size_t>(ot * stride_[0] + a) * x.shape.h + oh * stride_[1] + b) *
                                 x.shape.w +
                      ow * stride_[2] + d;
                  if (x.data[idx] > best) {
                    best = x.data[idx];
                    best_i = idx;
                  }
                }
              }
            }
            out.data[oi] = best;
            argmax_[oi] = best_i;
          }
        }
      }
    }
  }
  return out;
}

Tensor MaxPool::backward(const Tensor& grad) {
  require_shape(grad.data.size() == argmax_.size(), "maxpool backward gradient shape mismatch");
  Tensor dx(in_shape_);
  for (std::size_t i = 0; i < argmax_.size(); ++i) dx.data[argmax_[i]] += grad.data[i];
  return dx;
}

json MaxPool::config() const { return {{"type", kind()}, {"kernel", dim3(kernel_)}, {"stride", dim3(stride_)}}; }

// ---------------------------------------------------------------------------- AvgPool

AvgPool::AvgPool(Dim3 kernel) : kernel_(kernel) {}

Shape AvgPool::output_shape(const Shape& in) const {
  require_shape(in.t >= kernel_[0] && in.h >= kernel_[1] && in.w >= kernel_[2],
                "avgpool input " + in.str() + " smaller than its kernel");
  return Shape{in.n, in.c, in.t / kernel_[0], in.h / kernel_[1], in.w / kernel_[2]};
}

Tensor AvgPool::forward(const Tensor& x, const Context&) {
  const Shape o = output_shape(x.shape);
  in_shape_ = x.shape;
  Tensor out(o);
  const float inv = 1.0f / static_cast<float>(kernel_[0] * kernel_[1] * kernel_[2]);
  for (int n = 0; n < o.n; ++n) {
    for (int c = 0; c < o.c; ++c) {
      const float* src = x.sample(n) + c * x.shape.spatial();
      float* dst = out.sample(n) + c * o.spatial();
      for (int t = 0; t < o.t * kernel_[0]; ++t) {
        for (int h = 0; h < o.h * kernel_[1]; ++h) {
          const float* row = src + (static_cast<std::size_t>(t) * x.shape.h + h) * x.shape.w;
          float* orow = dst + (static_cast<std::size_t>(t / kernel_[0]) * o.h + h / kernel_[1]) * o.w;
          for (int w = 0; w < o.w * kernel_[2]; ++w) orow[w / kernel_[2]] += row[w];
        }
      }
      for (std::size_t i = 0; i < o.spatial(); ++i) dst[i] *= inv;
    }
  }
  return out;
}

Tensor AvgPool::backward(const Tensor& grad) {
  const Shape o = output_shape(in_shape_);
  require_shape(grad.shape == o, "avgpool backward gradient shape mismatch");
  Tensor dx(in_shape_);
  const float inv = 1.0f / static_cast<float>(kernel_[0] * kernel_[1] * kernel_[2]);
  for (int n = 0; n < o.n; ++n) {
    for (int c = 0; c < o.c; ++c) {
      float* dst = dx.sample(n) + c * in_shape_.spatial();
      const float* g = grad.sample(n) + c * o.spatial();
      for (int t = 0; t < o.t * kernel_[0]; ++t) {
        for (int h = 0; h < o.h * kernel_[1]; ++h) {
          float* row = dst + (static_cast<std::size_t>(t) * in_shape_.h + h) * in_shape_.w;
          const float* grow = g + (static_cast<std::size_t>(t / kernel_[0]) * o.h + h / kernel_[1]) * o.w;
          for (int w = 0; w < o.w * kernel_[2]; ++w) row[w] = grow[w / kernel_[2]] * inv;
        }
      }
    }
  }
  return dx;
}

json AvgPool::config() const { return {{"type", kind()}, {"kernel", dim3(kernel_)}}; }

// ---------------------------------------------------------------------------- GridPool

GridPool::GridPool(int grid) : grid_(grid) {
  if (grid < 1) throw ContractError("grid size must be positive");
}

Shape GridPool::output_shape(const Shape& in) const {
  require_shape(in.h >= grid_ && in.w >= grid_, "gridpool input " + in.str() + " smaller than the grid");
  return Shape{in.n, in.c, 1, grid_, grid_};
}

namespace {
inline int bin_start(int i, int len, int g) { return (i * len) / g; }
inline int bin_end(int i, int len, int g) { return ((i + 1) * len + g - 1) / g; }
}  // namespace

Tensor GridPool::forward(const Tensor& x, const Context&) {
  const Shape o = output_shape(x.shape);
  in_shape_ = x.shape;
  Tensor out(o);
  for (int n = 0; n < o.n; ++n) {
    for (int c = 0; c < o.c; ++c) {
      const float* src = x.sample(n) + c * x.shape.spatial();
      float* dst = out.sample(n) + c * o.spatial();
      for (int gy = 0; gy < grid_; ++gy) {
        const int h0 = bin_start(gy, x.shape.h, grid_), h1 = bin_end(gy, x.shape.h, grid_);
        for (int gx = 0; gx < grid_; ++gx) {
          const int w0 = bin_start(gx, x.shape.w, grid_), w1 = bin_end(gx, x.shape.w, grid_);
          float s = 0.0f;
          for (int t = 0; t < x.shape.t; ++t) {
            for (int h = h0; h < h1; ++h) {
              const float* row = src + (static_cast<std::size_t>(t) * x.shape.h + h) * x.shape.w;
              for (int w = w0; w < w1; ++w) s += row[w];
            }
          }
          dst[gy * grid_ + gx] = s / static_cast<float>(x.shape.t * (h1 - h0) * (w1 - w0));
        }
      }
    }
  }
  return out;
}

Tensor GridPool::backward(const Tensor& grad) {
  require_shape(grad.shape == output_shape(in_shape_), "gridpool backward gradient shape mismatch");
  Tensor dx(in_shape_);
  for (int n = 0; n < in_shape_.n; ++n) {
    for (int c = 0; c < in_shape_.c; ++c) {
      float* dst = dx.sample(n) + c * in_shape_.spatial();
      const float* g = grad.sample(n) + c * static_cast<std::size_t>(grid_ * grid_);
      for (int gy = 0; gy < grid_; ++gy) {
        const int h0 = bin_start(gy, in_shape_.h, grid_), h1 = bin_end(gy, in_shape_.h, grid_);
        for (int gx = 0; gx < grid_; ++gx) {
          const int w0 = bin_start(gx, in_shape_.w, grid_), w1 = bin_end(gx, in_shape_.w, grid_);
          const float v = g[gy * grid_ + gx] / static_cast<float>(in_shape_.t * (h1 - h0) * (w1 - w0));
          for (int t = 0; t < in_shape_.t; ++t) {
            for (int h = h0; h < h1; ++h) {
              float* row = dst + (static_cast<std::size_t>(t) * in_shape_.h + h) * in_shape_.w;
              for (int w = w0; w < w1; ++w) row[w] += v;
            }
          }
        }
      }
    }
  }
  return dx;
}

json GridPool::config() const { return {{"type", kind()}, {"grid", grid_}}; }

// ---------------------------------------------------------------------------- Flatten

Shape Flatten::output_shape(const Shape& in) const { return Shape{in.n, static_cast<int>(in.per_sample())}; }

Tensor Flatten::forward(const Tensor& x, const Context&) {
  in_shape_ = x.shape;
  Tensor out = x;
  out.shape = output_shape(x.shape);
  return out;
}

Tensor Flatten::backward(const Tensor& grad) {
  Tensor dx = grad;
  dx.shape = in_shape_;
  return dx;
}

// ---------------------------------------------------------------------------- Linear

Linear::Linear(int in_features, int out_features) : in_(in_features), out_(out_features) {
  weight_ = make_param("weight", Shape{out_, in_}, 0.0f, true);
  bias_ = make_param("bias", Shape{out_}, 0.0f, false);
}

Shape Linear::output_shape(const Shape& in) const {
  require_shape(static_cast<int>(in.per_sample()) == in_,
                "linear expects " + std::to_string(in_) + " features, got " + in.str());
  return Shape{in.n, out_};
}

Tensor Linear::forward(const Tensor& x, const Context&) {
  const Shape o = output_shape(x.shape);
  input_ = x;
  Tensor out(o);
  for (int n = 0; n < o.n; ++n) std::copy(bias_.value.data.begin(), bias_.value.data.end(), out.sample(n));
  gemm_nt(x.shape.n, out_, in_, x.data.data(), weight_.value.data.data(), out.data.data());
  return out;
}

Tensor Linear::backward(const Tensor& grad) {
  const int n = input_.shape.n;
  require_shape(grad.shape == output_shape(input_.shape), "linear backward gradient shape mismatch");
  gemm_tn(out_, in_, n, grad.data.data(), input_.data.data(), weight_.grad.data.data());
  for (int i = 0; i < n; ++i) {
    const float* g = grad.sample(i);
    for (int j = 0; j < out_; ++j) bias_.grad.data[j] += g[j];
  }
  Tensor dx(input_.shape);
  gemm_nn(n, in_, out_, grad.data.data(), weight_.value.data.data(), dx.data.data());
  return dx;
}

void Linear::collect_params(const std::string& prefix, std::vector<Param*>& out) {
  push_param(weight_, prefix, out);
  push_param(bias_, prefix, out);
}

json Linear::config() const { return {{"type", kind()}, {"in", in_}, {"out", out_}}; }

// ---------------------------------------------------------------------------- Dropout

Dropout::Dropout(float p) : p_(p) {
  if (!(p >= 0.0f && p < 1.0f)) throw ContractError("dropout probability must be in [0, 1)");
}

Tensor Dropout::forward(const Tensor& x, const Context& ctx) {
  if (ctx.mode != Mode::Train || p_ == 0.0f) {
    mask_.clear();
    return x;
  }
  if (ctx.rng == nullptr) throw ContractError("dropout in train mode needs a random generator");
  const float keep = 1.0f / (1.0f - p_);
  mask_.resize(x.data.size());
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    mask_[i] = uniform01(*ctx.rng) < p_ ? 0.0f : keep;
    out.data[i] = x.data[i] * mask_[i];
  }
  return out;
}

Tensor Dropout::backward(const Tensor& grad) {
  if (mask_.empty()) return grad;
  Tensor dx(grad.shape);
  for (std::size_t i = 0; i < grad.data.size(); ++i) dx.data[i] = grad.data[i] * mask_[i];
  return dx;
}

json Dropout::config() const { return {{"type", kind()}, {"p", p_}}; }

// ---------------------------------------------------------------------------- Sequential

Sequential::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    layers_.clear();
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  return *this;
}

Sequential& Sequential::add(LayerPtr layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Shape Sequential::output_shape(const Shape& in) const {
  Shape s = in;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

Tensor Sequential::forward(const Tensor& x, const Context& ctx) {
  Tensor cur = x;
  for (auto& l : layers_) cur = l->forward(cur, ctx);
  return cur;
}

Tensor Sequential::backward(const Tensor& grad) {
  Tensor cur = grad;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  return cur;
}

void Sequential::collect_params(const std::string& prefix, std::vector<Param*>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect_params(prefix + std::to_string(i) + ".", out);
}

void Sequential::collect_buffers(const std::string& prefix, std::vector<Buffer>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect_buffers(prefix + std::to_string(i) + ".", out);
}

json Sequential::config() const {
  json layers = json::array();
  for (const auto& l : layers_) layers.push_back(l->config());
  return {{"type", kind()}, {"layers", layers}};
}

void Sequential::visit(const std::function<void(Layer&)>& fn) {
  fn(*this);
  for (auto& l : layers_) l->visit(fn);
}

// ---------------------------------------------------------------------------- Residual

Residual::Residual(Sequential body) : body_(std::move(body)) {}

Shape Residual::output_shape(const Shape& in) const {
  const Shape o = body_.output_shape(in);
  require_shape(o == in, "residual body must preserve the shape " + in.str() + ", got " + o.str());
  return o;
}

Tensor Residual::forward(const Tensor& x, const Context& ctx) {
  Tensor y = body_.forward(x, ctx);
  require_shape(y.shape == x.shape, "residual body changed the shape");
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
  return y;
}

Tensor Residual::backward(const Tensor& grad) {
  Tensor dx = body_.backward(grad);
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += grad.data[i];
  return dx;
}

void Residual::collect_params(const std::string& prefix, std::vector<Param*>& out) {
  body_.collect_params(prefix + "body.", out);
}

void Residual::collect_buffers(const std::string& prefix, std::vector<Buffer>& out) {
  body_.collect_buffers(prefix + "body.", out);
}

json Residual::config() const { return {{"type", kind()}, {"body", body_.config()}}; }

void Residual::visit(const std::function<void(Layer&)>& fn) {
  fn(*this);
  body_.visit(fn);
}

// ---------------------------------------------------------------------------- ShuffleUnit

std::pair<Tensor, Tensor> split_channels(const Tensor& x) {
  require_shape(x.shape.c % 2 == 0, "channel split needs an even channel count");
  Shape half = x.shape;
  half.c /= 2;
  Tensor a(half), b(half);
  const std::size_t hs = half.per_sample();
  for (int n = 0; n < x.shape.n; ++n) {
    std::copy(x.sample(n), x.sample(n) + hs, a.sample(n));
    std::copy(x.sample(n) + hs, x.sample(n) + 2 * hs, b.sample(n));
  }
  return {std::move(a), std::move(b)};
}

Tensor concat_shuffle(const Tensor& a, const Tensor& b) {
  require_shape(a.shape == b.shape, "shuffle halves must have equal shapes");
  Shape o = a.shape;
  o.c *= 2;
  Tensor out(o);
  const std::size_t sp = o.spatial();
  for (int n = 0; n < o.n; ++n) {
    for (int k = 0; k < o.c; ++k) {
      const Tensor& src = (k % 2 == 0) ? a : b;
      const float* s = src.sample(n) + static_cast<std::size_t>(k / 2) * sp;
      std::copy(s, s + sp, out.sample(n) + static_cast<std::size_t>(k) * sp);
    }
  }
  return out;
}

ShuffleUnit::ShuffleUnit(Sequential branch) : branch_(std::move(branch)) {}

Shape ShuffleUnit::output_shape(const Shape& in) const {
  require_shape(in.c % 2 == 0, "shuffle unit needs an even channel count");
  Shape half = in;
  half.c /= 2;
  require_shape(branch_.output_shape(half) == half, "shuffle branch must preserve its input shape");
  return in;
}

Tensor ShuffleUnit::forward(const Tensor& x, const Context& ctx) {
  output_shape(x.shape);
  in_shape_ = x.shape;
  auto [a, b] = split_channels(x);
  Tensor bb = branch_.forward(b, ctx);
  return concat_shuffle(a, bb);
}

Tensor ShuffleUnit::backward(const Tensor& grad) {
  require_shape(grad.shape == in_shape_, "shuffle backward gradient shape mismatch");
  Shape half = in_shape_;
  half.c /= 2;
  Tensor da(half), dbb(half);
  const std::size_t sp = half.spatial();
  for (int n = 0; n < half.n; ++n) {
    for (int k = 0; k < in_shape_.c; ++k) {
      Tensor& dst = (k % 2 == 0) ? da : dbb;
      const float* s = grad.sample(n) + static_cast<std::size_t>(k) * sp;
      std::copy(s, s + sp, dst.sample(n) + static_cast<std::size_t>(k / 2) * sp);
    }
  }
  Tensor db = branch_.backward(dbb);
  Tensor dx(in_shape_);
  const std::size_t hs = half.per_sample();
  for (int n = 0; n < half.n; ++n) {
    std::copy(da.sample(n), da.sample(n) + hs, dx.sample(n));
    std::copy(db.sample(n), db.sample(n) + hs, dx.sample(n) + hs);
  }
  return dx;
}

void ShuffleUnit::collect_params(const std::string& prefix, std::vector<Param*>& out) {
  branch_.collect_params(prefix + "branch.", out);
}

void ShuffleUnit::collect_buffers(const std::string& prefix, std::vector<Buffer>& out) {
  branch_.collect_buffers(prefix + "branch.", out);
}

json ShuffleUnit::config() const { return {{"type", kind()}, {"branch", branch_.config()}}; }

void ShuffleUnit::visit(const std::function<void(Layer&)>& fn) {
  fn(*this);
  branch_.visit(fn);
}

// ---------------------------------------------------------------------------- factory

namespace {
Sequential make_sequential(const json& cfg) {
  Sequential s;
  for (const auto& l : cfg.at("layers")) s.add(make_layer(l));
  return s;
}
}  // namespace

LayerPtr make_layer(const json& cfg) {
  const auto type = cfg.at("type").get<std::string>();
  if (type == "conv") {
    return std::make_unique<Conv>(cfg.at("in").get<int>(), cfg.at("out").get<int>(), dim3(cfg.at("kernel")),
                                  dim3(cfg.at("stride")), dim3(cfg.at("pad")), cfg.at("groups").get<int>(),
                                  cfg.at("bias").get<bool>());
  }
  if (type == "batchnorm") {
    return std::make_unique<BatchNorm>(cfg.at("channels").get<int>(), cfg.at("momentum").get<float>(),
                                       cfg.at("eps").get<float>());
  }
  if (type == "relu") return std::make_unique<ReLU>();
  if (type == "maxpool") return std::make_unique<MaxPool>(dim3(cfg.at("kernel")), dim3(cfg.at("stride")));
  if (type == "avgpool") return std::make_unique<AvgPool>(dim3(cfg.at("kernel")));
  if (type == "gridpool") return std::make_unique<GridPool>(cfg.at("grid").get<int>());
  if (type == "flatten") return std::make_unique<Flatten>();
  if (type == "linear") return std::make_unique<Linear>(cfg.at("in").get<int>(), cfg.at("out").get<int>());
  if (type == "dropout") return std::make_unique<Dropout>(cfg.at("p").get<float>());
  if (type == "sequential") return std::make_unique<Sequential>(make_sequential(cfg));
  if (type == "residual") return std::make_unique<Residual>(make_sequential(cfg.at("body")));
  if (type == "shuffle") return std::make_unique<ShuffleUnit>(make_sequential(cfg.at("branch")));
  throw SchemaError("unknown layer type '" + type + "'");
}

}  // namespace dbm::nn
