#include "dbm/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "dbm/error.hpp"

namespace dbm::sampling {

std::vector<int> sample_segments(int frame_count, const SegmentSpec& spec, std::uint64_t seed) {
  if (frame_count < 1) throw DomainError("frame_count must be at least 1");
  if (spec.n_segments < 1) throw DomainError("n_segments must be at least 1");
  const std::int64_t len = frame_count;
  const std::int64_t n = spec.n_segments;
  std::vector<int> out(static_cast<std::size_t>(n));

  if (spec.mode == SampleMode::CenterEval) {
    for (std::int64_t i = 0; i < n; ++i) out[i] = static_cast<int>(((2 * i + 1) * len) / (2 * n));
    return out;
  }

  Rng rng(seed);
  for (std::int64_t i = 0; i < n; ++i) {
    if (len >= n) {
      // Integers inside the real interval [i*len/n, (i+1)*len/n).
      const std::int64_t lo = (i * len + n - 1) / n;
      const std::int64_t hi = ((i + 1) * len + n - 1) / n - 1;
      out[i] = static_cast<int>(uniform_int(rng, lo, hi));
    } else {
      // Intervals shorter than a frame: frames repeat across segments.
      const double a = static_cast<double>(i * len) / n;
      const double b = static_cast<double>((i + 1) * len) / n;
      const double u = uniform(rng, a, b);
      out[i] = static_cast<int>(std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(u)), 0, len - 1));
    }
  }
  return out;
}

std::vector<int> loop_pad(int indices_needed, int frame_count) {
  if (indices_needed < 1 || frame_count < 1) throw DomainError("loop_pad arguments must be at least 1");
  std::vector<int> out(static_cast<std::size_t>(indices_needed));
  for (int i = 0; i < indices_needed; ++i) out[i] = i % frame_count;
  return out;
}

std::vector<int> sample_clip_3d(int frame_count, const ClipSpec3D& spec, std::uint64_t seed) {
  if (frame_count < 1) throw DomainError("frame_count must be at least 1");
  if (spec.clip_len < 1 || spec.downsample < 1) throw DomainError("clip_len and downsample must be at least 1");
  const int extent = spec.clip_len * spec.downsample;
  std::vector<int> span;
  if (frame_count >= extent) {
    int start = (frame_count - extent) / 2;
    if (spec.mode == SampleMode::RandomTrain) {
      Rng rng(seed);
      start = static_cast<int>(uniform_int(rng, 0, frame_count - extent));
    }
    span.resize(extent);
    for (int i = 0; i < extent; ++i) span[i] = start + i;
  } else {
    span = loop_pad(extent, frame_count);
  }
  std::vector<int> out;
  out.reserve(spec.clip_len);
  for (int i = 0; i < extent; i += spec.downsample) out.push_back(span[i]);
  return out;
}

Rect train_crop(int width, int height, int out_size, const ScaleJitter& jitter, Rng& rng) {
  if (jitter.scales.empty()) throw DomainError("scale jitter needs at least one scale");
  const int base = std::min(width, height);
  std::vector<int> sizes;
  for (double s : jitter.scales) {
    int c = std::max(1, static_cast<int>(base * s));
    if (std::abs(c - out_size) < 3) c = out_size;
    sizes.push_back(std::min(c, base));
  }
  std::vector<std::pair<int, int>> pairs;  // (w, h)
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    for (std::size_t j = 0; j < sizes.size(); ++j) {
      if (std::abs(static_cast<int>(i) - static_cast<int>(j)) <= jitter.max_distort) {
        pairs.emplace_back(sizes[j], sizes[i]);
      }
    }
  }
  const auto [cw, ch] = pairs[uniform_index(rng, pairs.size())];
  const int ws = (width - cw) / 4;
  const int hs = (height - ch) / 4;
  std::vector<std::pair<int, int>> offsets{{0, 0}, {4 * ws, 0}, {0, 4 * hs}, {4 * ws, 4 * hs}, {2 * ws, 2 * hs}};
  if (jitter.more_fix_crop) {
    offsets.insert(offsets.end(), {{0, 2 * hs},
                                   {4 * ws, 2 * hs},
                                   {2 * ws, 4 * hs},
                                   {2 * ws, 0},
                                   {ws, hs},
                                   {3 * ws, hs},
                                   {ws, 3 * hs},
                                   {3 * ws, 3 * hs}});
  }
  const auto [ox, oy] = offsets[uniform_index(rng, offsets.size())];
  return Rect{ox, oy, cw, ch};
}

Rect eval_crop(int width, int height, const ScaleJitter& jitter) {
  const int base = std::min(width, height);
  const int side = std::clamp(static_cast<int>(std::lround(base * jitter.eval_crop_scale)), 1, base);
  return Rect{(width - side) / 2, (height - side) / 2, side, side};
}

FrameTensor augment_spatial(const FrameTensor& frame, bool train, int out_size, std::uint64_t seed,
                            const ScaleJitter& jitter) {
  if (frame.empty()) throw DomainError("cannot augment an empty frame");
  if (out_size < 1) throw DomainError("output size must be positive");
  if (out_size > frame.width() && out_size > frame.height()) {
    throw DomainError("output size " + std::to_string(out_size) + " exceeds the " + std::to_string(frame.width()) +
                      "x" + std::to_string(frame.height()) + " source");
  }
  Rect roi;
  if (train) {
    Rng rng(seed);
    roi = train_crop(frame.width(), frame.height(), out_size, jitter, rng);
  } else {
    roi = eval_crop(frame.width(), frame.height(), jitter);
  }
  return crop_resize(frame, roi, out_size, out_size);
}

}  // namespace dbm::sampling
