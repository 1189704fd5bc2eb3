#include "dbm/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace dbm {

namespace {

struct Tap {
  int i0;
  int i1;
  float w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> make_taps(int offset, int src_len, int out_len, Interpolation interp) {
  std::vector<Tap> taps(out_len);
  const double scale = static_cast<double>(src_len) / out_len;
  for (int o = 0; o < out_len; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    if (interp == Interpolation::Nearest) {
      int i = std::clamp(static_cast<int>(std::floor((o + 0.5) * scale)), 0, src_len - 1);
      taps[o] = {offset + i, offset + i, 0.0f};
      continue;
    }
    s = std::clamp(s, 0.0, static_cast<double>(src_len - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, src_len - 1);
    taps[o] = {offset + i0, offset + i1, static_cast<float>(s - i0)};
  }
  return taps;
}

template <typename T>
void check_roi(const Image<T>& src, Rect roi, int out_w, int out_h) {
  if (src.empty() || src.width() < 1 || src.height() < 1) throw DomainError("empty source frame");
  if (out_w < 1 || out_h < 1) throw DomainError("output size must be positive");
  if (roi.width < 1 || roi.height < 1 || roi.x < 0 || roi.y < 0 || roi.x + roi.width > src.width() ||
      roi.y + roi.height > src.height()) {
    throw DomainError("crop region outside the frame");
  }
}

template <typename T, typename Store>
Image<T> resample(const Image<T>& src, Rect roi, int out_w, int out_h, Interpolation interp, Store store) {
  check_roi(src, roi, out_w, out_h);
  Image<T> out(out_w, out_h, src.channels());
  const auto xt = make_taps(roi.x, roi.width, out_w, interp);
  const auto yt = make_taps(roi.y, roi.height, out_h, interp);
  std::vector<float> row0(out_w), row1(out_w);
  for (int c = 0; c < src.channels(); ++c) {
    auto in = src.plane(c);
    auto dst = out.plane(c);
    const int sw = src.width();
    for (int y = 0; y < out_h; ++y) {
      const T* r0 = in.data() + static_cast<std::size_t>(yt[y].i0) * sw;
      const T* r1 = in.data() + static_cast<std::size_t>(yt[y].i1) * sw;
      const float wy = yt[y].w1;
      T* o = dst.data() + static_cast<std::size_t>(y) * out_w;
      for (int x = 0; x < out_w; ++x) {
        const Tap& t = xt[x];
        const float top = static_cast<float>(r0[t.i0]) + t.w1 * (static_cast<float>(r0[t.i1]) - r0[t.i0]);
        const float bot = static_cast<float>(r1[t.i0]) + t.w1 * (static_cast<float>(r1[t.i1]) - r1[t.i0]);
        o[x] = store(top + wy * (bot - top));
      }
    }
  }
  return out;
}

}  // namespace

FrameTensor crop_resize(const FrameTensor& src, Rect roi, int out_w, int out_h, Interpolation interp) {
  return resample(src, roi, out_w, out_h, interp, [](float v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  });
}

Image<float> crop_resize(const Image<float>& src, Rect roi, int out_w, int out_h, Interpolation interp) {
  return resample(src, roi, out_w, out_h, interp, [](float v) { return v; });
}

FrameTensor stack_channels(const FrameTensor& a, const FrameTensor& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw ContractError("cannot stack frames of different size (" + std::to_string(a.width()) + "x" +
                        std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                        std::to_string(b.height()) + ")");
  }
  FrameTensor out(a.width(), a.height(), a.channels() + b.channels());
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + a.data().size());
  return out;
}

FrameTensor extract_channel(const FrameTensor& src, int channel) {
  if (channel < 0 || channel >= src.channels()) throw ContractError("channel index out of range");
  FrameTensor out(src.width(), src.height(), 1);
  auto p = src.plane(channel);
  std::copy(p.begin(), p.end(), out.data().begin());
  return out;
}

}  // namespace dbm
