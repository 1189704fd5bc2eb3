#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dbm/framestore.hpp"
#include "dbm/image.hpp"
#include "dbm/manifest.hpp"

namespace dbm::synth {

/// Each class is a reach of a bright "hand" disk from a fixed home position
/// out along one of ceil(n_classes / 2) directions and back. Classes sharing a
/// direction differ only in how far the hand goes, so a single frame of a long
/// reach can look like the peak of a short one. The reach occupies a random
/// part of the clip; the hand rests at home otherwise. Drivers differ in
/// colours, sizes and background.
struct SynthSpec {
  int n_classes = 13;
  int drivers = 4;
  int clips_per_driver_per_class = 2;
  int width = 640;
  int height = 360;
  double fps = 30.0;
  double duration_mean = 50.0;
  double duration_sd = 12.0;
  int min_duration = 8;
  std::uint64_t seed = 0;

  void validate() const;
  std::map<std::string, std::string> to_metadata() const;
  static SynthSpec from_metadata(const std::map<std::string, std::string>& meta);
  bool operator==(const SynthSpec&) const = default;
};

/// Locator prefix of procedurally rendered sources.
inline constexpr std::string_view kLocatorScheme = "synth:";

/// Manifest whose sources are `synth:<clip index>` locators; frames are
/// rendered on demand by SynthFrameStore. Metadata carries the spec.
DatasetManifest generate(const SynthSpec& spec);

/// Everything the renderer needs for one generated clip.
struct ClipPlan {
  int index = 0;
  int driver = 0;
  int label = 0;
  int frame_count = 1;
  double target_angle = 0.0;  // radians
  double target_radius = 0.0;
  double target_depth = 0.0;  // meters at the peak of the reach
  /// Start and length of the reach as fractions of the clip.
  double onset = 0.0;
  double active = 1.0;
};

/// Home position of the hand in the unit action square (x right, y down).
inline constexpr double kHomeX = 0.5;
inline constexpr double kHomeY = 0.55;
inline constexpr double kReachRadius = 0.3;
inline constexpr double kShortReachRadius = 0.12;
/// Field-of-view magnification of RGB relative to IR/depth.
inline constexpr double kRgbZoom = 1.08;

int class_directions(int n_classes);
double class_angle(int label, int n_classes);
/// Nominal reach distance of a class in unit-square units.
double class_reach(int label, int n_classes);

ClipPlan plan_clip(const SynthSpec& spec, int index);

/// Renders frame `frame` (0-based within the generated clip) of one modality.
class Renderer {
 public:
  explicit Renderer(SynthSpec spec);

  const SynthSpec& spec() const { return spec_; }
  FrameTensor render(const ClipPlan& plan, Modality m, int frame) const;
  /// Metric depth in meters, millimetre resolution, 0 for holes.
  DepthFrameMetric render_depth(const ClipPlan& plan, int frame) const;
  /// Hand centre in unit-square coordinates at `frame`.
  std::array<double, 2> hand_position(const ClipPlan& plan, int frame) const;

 private:
  struct Style;
  const Style& style(int driver) const;

  SynthSpec spec_;
  mutable std::mutex mutex_;
  mutable std::map<int, std::shared_ptr<const Style>> styles_;
};

/// Frame store over `synth:` locators. A `#N` locator suffix offsets frames,
/// which is how clips split during prep address their part of the original.
class SynthFrameStore final : public FrameStore {
 public:
  explicit SynthFrameStore(SynthSpec spec) : renderer_(std::move(spec)) {}
  FrameTensor load(const ClipRecord& clip, Modality m, int index) const override;
  DepthFrameMetric load_depth_metric(const ClipRecord& clip, int index) const;
  const Renderer& renderer() const { return renderer_; }

  static bool is_synthetic(const std::string& locator);

 private:
  ClipPlan plan(const ClipRecord& clip, Modality m, int index, int& frame) const;
  Renderer renderer_;
};

/// Writes every frame of `m` as PNG files under `dir/frames/<clip_id>/<modality>/`
/// and returns the manifest pointing at them (paths relative to `dir`).
DatasetManifest materialize(const DatasetManifest& m, const FrameStore& store, const std::filesystem::path& dir);

/// Label whose template best matches the clip's motion, or kRejectLabel when
/// no hand is visible in any frame.
inline constexpr int kRejectLabel = -1;
int oracle_classify(const std::vector<FrameTensor>& frames, Modality m, int n_classes);
int oracle_classify(const FrameStore& store, const ClipRecord& clip, Modality m, int n_classes);

}  // namespace dbm::synth
