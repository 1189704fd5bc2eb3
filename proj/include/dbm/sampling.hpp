#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "dbm/image.hpp"
#include "dbm/imgproc.hpp"
#include "dbm/rng.hpp"

namespace dbm::sampling {

enum class SampleMode { RandomTrain, CenterEval };

/// TSN-style sparse sampling: the clip is cut into n_segments equal intervals
/// and one frame is taken from each.
struct SegmentSpec {
  int n_segments = 4;
  SampleMode mode = SampleMode::CenterEval;
};

/// Clip sampling for 3D models: clip_len frames taken every `downsample`
/// frames from a clip_len * downsample extent.
struct ClipSpec3D {
  int clip_len = 16;
  int downsample = 2;
  SampleMode mode = SampleMode::CenterEval;
};

std::vector<int> sample_segments(int frame_count, const SegmentSpec& spec, std::uint64_t seed);
std::vector<int> sample_clip_3d(int frame_count, const ClipSpec3D& spec, std::uint64_t seed);

/// Index i of the result is i mod frame_count.
std::vector<int> loop_pad(int indices_needed, int frame_count);

/// Multi-scale corner cropping as in TSN. Horizontal flipping is never applied.
struct ScaleJitter {
  std::vector<double> scales{1.0, 0.875, 0.75, 0.66};
  int max_distort = 1;
  bool more_fix_crop = true;
  /// Side of the eval center crop relative to the short image side.
  double eval_crop_scale = 1.0;
};

Rect train_crop(int width, int height, int out_size, const ScaleJitter& jitter, Rng& rng);
Rect eval_crop(int width, int height, const ScaleJitter& jitter);

/// Train: scale-jittered crop then resize to out_size x out_size.
/// Eval: center crop then resize. Throws DomainError when out_size exceeds
/// the source on both dimensions.
FrameTensor augment_spatial(const FrameTensor& frame, bool train, int out_size, std::uint64_t seed,
                            const ScaleJitter& jitter = {});

}  // namespace dbm::sampling
