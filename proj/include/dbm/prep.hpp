#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "dbm/image.hpp"
#include "dbm/imgproc.hpp"
#include "dbm/manifest.hpp"

namespace dbm::prep {

/// Distances at or below this saturate to 255.
inline constexpr double kMinDepthMeters = 0.5;
inline constexpr int kFrameWidth = 640;
inline constexpr int kFrameHeight = 360;

/// d_p = floor(255 * min(d_min / d_m, 1)) for d_m > 0, else 0.
/// Throws DomainError for negative or NaN input.
std::uint8_t quantize_depth(double d_m);
QuantizedFrame quantize_depth_frame(const DepthFrameMetric& depth);

/// Resizes to exactly width x height; channel count is preserved.
FrameTensor resize_frame(const FrameTensor& frame, int width = kFrameWidth, int height = kFrameHeight,
                         Interpolation interp = Interpolation::Bilinear);

/// Half-open frame interval [first, first + count).
struct FrameRange {
  std::int64_t first = 0;
  std::int64_t count = 0;

  std::int64_t end() const { return first + count; }
  bool operator==(const FrameRange&) const = default;
};

struct WindowingPolicy {
  int target_span = 50;
  double fps = 30.0;
};

/// Clips no longer than the target span are returned unchanged. Longer ones are
/// cut into round(length / span) contiguous chunks whose lengths differ by at most 1.
std::vector<FrameRange> split_clip(FrameRange frames, const WindowingPolicy& policy);

/// Applies split_clip to every record. Chunks get ids `<clip_id>_s<k>` and their
/// locators carry the chunk's first frame.
DatasetManifest split_clips(const DatasetManifest& m, const WindowingPolicy& policy);

/// Brings every class to the median class count. Down-sampling draws uniformly
/// without replacement, up-sampling duplicates records (ids `<clip_id>_dup<k>`).
DatasetManifest balance_classes(const DatasetManifest& m, std::uint64_t seed);

struct SplitRatios {
  double train = 4.0;
  double val = 1.0;
  double test = 1.0;

  static SplitRatios parse(const std::string& text);  // "4:1:1"
};

/// Assigns whole drivers to TRAIN/VAL/TEST. Drivers are visited by descending
/// clip count and each goes to the partition furthest below its clip quota.
DatasetManifest split_by_driver(const DatasetManifest& m, SplitRatios ratios, std::uint64_t seed);

struct PrepOptions {
  WindowingPolicy windowing;
  SplitRatios ratios;
  std::uint64_t seed = 0;
  bool balance = true;
};

struct DurationStats {
  std::size_t clips = 0;
  double mean = 0.0;
  double stddev = 0.0;
  int min = 0;
  int max = 0;
};

struct PrepReport {
  std::map<int, std::size_t> counts_before;
  std::map<int, std::size_t> counts_after;
  std::map<int, DurationStats> duration_by_class;
  /// Bin start (multiple of 10 frames) -> clip count, after preparation.
  std::map<int, std::size_t> duration_histogram;
  std::map<Partition, std::size_t> clips_per_partition;
  std::map<Partition, std::size_t> drivers_per_partition;
  std::map<Modality, std::size_t> missing_modalities;
};

struct PrepResult {
  DatasetManifest manifest;
  PrepReport report;
};

/// Split clips, balance classes (unless disabled), then split by driver.
PrepResult prepare(const DatasetManifest& m, const PrepOptions& options);

nlohmann::json to_json(const PrepReport& report);

}  // namespace dbm::prep
