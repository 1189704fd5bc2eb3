#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dbm {

/// Source modalities recorded by the side camera.
enum class Modality { Rgb = 0, Ir = 1, Depth = 2 };
inline constexpr std::array<Modality, 3> kAllModalities{Modality::Rgb, Modality::Ir, Modality::Depth};

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);

enum class Partition { Unassigned, Train, Val, Test };

std::string_view to_string(Partition p);
Partition parse_partition(std::string_view s);

struct ClassLabel {
  int id = 0;
  std::string name;

  bool operator==(const ClassLabel&) const = default;
};

/// The 13 behaviour classes: ten StateFarm/AUC classes plus reaching side,
/// hands free and switch gear.
std::vector<ClassLabel> default_label_set();

/// A frame-sequence locator: a frame directory, a video file, or a procedural
/// source, optionally followed by `#<first_frame>` when the clip starts inside it.
struct Locator {
  std::string path;
  std::int64_t first_frame = 0;

  static Locator parse(std::string_view text);
  std::string str() const;
  bool operator==(const Locator&) const = default;
};

struct ClipRecord {
  std::string clip_id;
  std::string driver_id;
  int label = 0;
  int frame_count = 1;
  double fps = 30.0;
  Partition partition = Partition::Unassigned;
  /// Indexed by Modality; empty string when the modality is absent.
  std::array<std::string, 3> sources;

  const std::string& source(Modality m) const { return sources[static_cast<int>(m)]; }
  std::string& source(Modality m) { return sources[static_cast<int>(m)]; }
  bool has(Modality m) const { return !source(m).empty(); }

  bool operator==(const ClipRecord&) const = default;
};

struct DatasetManifest {
  std::vector<ClipRecord> records;
  std::vector<ClassLabel> label_set = default_label_set();
  std::map<std::string, std::string> metadata;

  int num_classes() const { return static_cast<int>(label_set.size()); }
  const ClassLabel& label(int id) const;

  /// Records whose partition equals `p`, in manifest order.
  std::vector<ClipRecord> partition(Partition p) const;

  bool operator==(const DatasetManifest&) const = default;
};

inline constexpr int kManifestSchemaVersion = 1;

/// Throws IntegrityError when an invariant does not hold.
void validate(const DatasetManifest& m);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// Text form used by load/save; exposed so artifacts can be compared byte-wise.
std::string serialize_manifest(const DatasetManifest& m);
DatasetManifest parse_manifest(std::string_view text, const std::string& origin = "<memory>");

/// Count per label id; every label of the set appears, possibly with 0.
std::map<int, std::size_t> class_histogram(const DatasetManifest& m);

/// Record ids per modality that lack a source. Absences are reported, never filled in.
std::map<Modality, std::vector<std::string>> missing_modalities(const DatasetManifest& m);

/// Distinct drivers per partition.
std::map<Partition, std::vector<std::string>> drivers_by_partition(const DatasetManifest& m);

}  // namespace dbm
