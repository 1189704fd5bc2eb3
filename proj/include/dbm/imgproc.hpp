#pragma once

#include "dbm/image.hpp"

namespace dbm {

struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool operator==(const Rect&) const = default;
};

enum class Interpolation { Bilinear, Nearest };

/// Resamples `roi` of `src` to out_w x out_h. Pixel centers are mapped, so an
/// identity-sized roi reproduces the source exactly.
FrameTensor crop_resize(const FrameTensor& src, Rect roi, int out_w, int out_h,
                        Interpolation interp = Interpolation::Bilinear);
Image<float> crop_resize(const Image<float>& src, Rect roi, int out_w, int out_h,
                         Interpolation interp = Interpolation::Bilinear);

/// Stacks the planes of `a` followed by those of `b`. Dimensions must match.
FrameTensor stack_channels(const FrameTensor& a, const FrameTensor& b);
FrameTensor extract_channel(const FrameTensor& src, int channel);

}  // namespace dbm
