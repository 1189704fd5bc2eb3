#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dbm/error.hpp"

namespace dbm {

/// Planar (channel-major) image. Plane c occupies [c*H*W, (c+1)*H*W).
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 0) throw DomainError("negative image dimensions");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }

  T& at(int c, int y, int x) { return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x]; }
  const T& at(int c, int y, int x) const {
    return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x];
  }

  std::span<T> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const T> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

/// 8-bit frame of any modality: RGB (3 channels), IR or quantized depth (1), IRD (2).
using FrameTensor = Image<std::uint8_t>;
/// Metric depth in meters; 0 means "no measurement".
using DepthFrameMetric = Image<float>;
/// Depth converted to pixel values in [0, 255].
using QuantizedFrame = Image<std::uint8_t>;

}  // namespace dbm
