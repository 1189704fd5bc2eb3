#pragma once

#include <filesystem>
#include <functional>
#include <memory>

#include "dbm/image.hpp"
#include "dbm/manifest.hpp"

namespace dbm {

/// Source of decoded frames at prep resolution (640 x 360). RGB frames have 3
/// channels, IR 1, depth 1 (quantized). `index` is relative to the clip start.
class FrameStore {
 public:
  virtual ~FrameStore() = default;
  virtual FrameTensor load(const ClipRecord& clip, Modality m, int index) const = 0;
};

/// Reads numbered image files (`<dir>/000123.png`) or frames of a video file.
/// 16-bit depth images hold millimetres and are quantized on load; 8-bit depth
/// images are taken as already quantized. Frames of other sizes are resized.
class DiskFrameStore final : public FrameStore {
 public:
  /// Relative locators resolve against `base`.
  explicit DiskFrameStore(std::filesystem::path base = {});
  FrameTensor load(const ClipRecord& clip, Modality m, int index) const override;

  static std::string frame_file_name(std::int64_t index);

 private:
  std::filesystem::path base_;
};

/// Picks the synthetic renderer for `synth:` locators and the disk reader otherwise.
std::unique_ptr<FrameStore> open_frame_store(const DatasetManifest& m, const std::filesystem::path& base = {});

/// Live RGB frames from a local camera, resized to prep resolution. The
/// reader returns false once the device stops delivering frames.
std::function<bool(FrameTensor&)> open_camera(int index);

/// PNG writers; metric depth is stored as 16-bit millimetres.
void write_frame(const std::filesystem::path& file, const FrameTensor& frame);
void write_depth_mm(const std::filesystem::path& file, const DepthFrameMetric& depth);

}  // namespace dbm
