#include "dbm/manifest.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "dbm/error.hpp"

namespace dbm {

namespace {

constexpr std::string_view kMagic = "#dbm-manifest";
constexpr std::string_view kFieldsLine =
    "#fields clip_id|driver_id|label_id|frame_count|fps|partition|rgb_path|ir_path|depth_path";
constexpr int kFieldCount = 9;

std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '|': out += "\\|"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

// Splits on unescaped '|' and unescapes each field.
std::vector<std::string> split_fields(std::string_view line, const std::string& where) {
  std::vector<std::string> fields(1);
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '\\') {
      if (i + 1 >= line.size()) throw SchemaError(where + ": dangling escape");
      const char n = line[++i];
      switch (n) {
        case '\\': fields.back() += '\\'; break;
        case '|': fields.back() += '|'; break;
        case 'n': fields.back() += '\n'; break;
        case 'r': fields.back() += '\r'; break;
        default: throw SchemaError(where + ": unknown escape \\" + std::string(1, n));
      }
    } else if (c == '|') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view s, const std::string& where, std::string_view what) {
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end || s.empty()) {
    throw SchemaError(where + ": invalid " + std::string(what) + " '" + std::string(s) + "'");
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Rgb: return "rgb";
    case Modality::Ir: return "ir";
    case Modality::Depth: return "depth";
  }
  return "?";
}

Modality parse_modality(std::string_view s) {
  if (s == "rgb") return Modality::Rgb;
  if (s == "ir") return Modality::Ir;
  if (s == "depth") return Modality::Depth;
  throw DomainError("unknown modality '" + std::string(s) + "'");
}

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::Unassigned: return "UNASSIGNED";
    case Partition::Train: return "TRAIN";
    case Partition::Val: return "VAL";
    case Partition::Test: return "TEST";
  }
  return "?";
}

Partition parse_partition(std::string_view s) {
  if (s == "UNASSIGNED") return Partition::Unassigned;
  if (s == "TRAIN") return Partition::Train;
  if (s == "VAL") return Partition::Val;
  if (s == "TEST") return Partition::Test;
  throw SchemaError("unknown partition '" + std::string(s) + "'");
}

std::vector<ClassLabel> default_label_set() {
  static const char* const names[] = {
      "safe_drive",          "texting_right",   "phonecall_right", "texting_left",
      "phonecall_left",      "radio",           "drinking",        "reaching_behind",
      "hair_and_makeup",     "talking_to_passenger", "reaching_side", "hands_free",
      "switch_gear",
  };
  std::vector<ClassLabel> labels;
  for (int i = 0; i < 13; ++i) labels.push_back({i, names[i]});
  return labels;
}

Locator Locator::parse(std::string_view text) {
  Locator loc;
  const auto hash = text.rfind('#');
  if (hash == std::string_view::npos) {
    loc.path = std::string(text);
    return loc;
  }
  const auto tail = text.substr(hash + 1);
  std::int64_t first = 0;
  auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), first);
  if (ec != std::errc{} || ptr != tail.data() + tail.size() || tail.empty() || first < 0) {
    // Not a frame offset; '#' belongs to the path.
    loc.path = std::string(text);
    return loc;
  }
  loc.path = std::string(text.substr(0, hash));
  loc.first_frame = first;
  return loc;
}

std::string Locator::str() const {
  if (first_frame == 0) return path;
  return path + "#" + std::to_string(first_frame);
}

const ClassLabel& DatasetManifest::label(int id) const {
  for (const auto& l : label_set) {
    if (l.id == id) return l;
  }
  throw IntegrityError("unknown label id " + std::to_string(id));
}

std::vector<ClipRecord> DatasetManifest::partition(Partition p) const {
  std::vector<ClipRecord> out;
  for (const auto& r : records) {
    if (r.partition == p) out.push_back(r);
  }
  return out;
}

void validate(const DatasetManifest& m) {
  std::set<int> ids;
  for (std::size_t i = 0; i < m.label_set.size(); ++i) {
    if (!ids.insert(m.label_set[i].id).second) {
      throw IntegrityError("duplicate label id " + std::to_string(m.label_set[i].id));
    }
  }
  // Dense ids: {0..C-1}.
  if (!ids.empty() && (*ids.begin() != 0 || *ids.rbegin() != static_cast<int>(ids.size()) - 1)) {
    throw IntegrityError("label ids must be dense 0..C-1");
  }

  std::set<std::string_view> clip_ids;
  std::map<std::string_view, Partition> driver_partition;
  for (const auto& r : m.records) {
    if (r.clip_id.empty()) throw IntegrityError("empty clip_id");
    if (!clip_ids.insert(r.clip_id).second) throw IntegrityError("duplicate clip_id '" + r.clip_id + "'");
    if (!ids.contains(r.label)) {
      throw IntegrityError("clip '" + r.clip_id + "' has unknown label " + std::to_string(r.label));
    }
    if (r.frame_count < 1) throw IntegrityError("clip '" + r.clip_id + "' has frame_count < 1");
    if (!(r.fps > 0.0)) throw IntegrityError("clip '" + r.clip_id + "' has non-positive fps");
    if (r.partition == Partition::Unassigned) continue;
    auto [it, inserted] = driver_partition.emplace(r.driver_id, r.partition);
    if (!inserted && it->second != r.partition) {
      throw IntegrityError("driver '" + r.driver_id + "' appears in partitions " +
                           std::string(to_string(it->second)) + " and " + std::string(to_string(r.partition)));
    }
  }
}

std::string serialize_manifest(const DatasetManifest& m) {
  std::ostringstream os;
  os << kMagic << ' ' << kManifestSchemaVersion << '\n';
  for (const auto& l : m.label_set) os << "#label " << l.id << '|' << escape(l.name) << '\n';
  for (const auto& [k, v] : m.metadata) os << "#meta " << escape(k) << '|' << escape(v) << '\n';
  os << kFieldsLine << '\n';
  for (const auto& r : m.records) {
    os << escape(r.clip_id) << '|' << escape(r.driver_id) << '|' << r.label << '|' << r.frame_count << '|'
       << format_double(r.fps) << '|' << to_string(r.partition);
    for (const auto& s : r.sources) os << '|' << escape(s);
    os << '\n';
  }
  return os.str();
}

DatasetManifest parse_manifest(std::string_view text, const std::string& origin) {
  DatasetManifest m;
  m.label_set.clear();
  bool header_seen = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::string where = origin + ":" + std::to_string(line_no);

    if (!header_seen) {
      if (!line.starts_with(kMagic)) throw SchemaError(where + ": missing manifest header");
      const auto version = parse_number<int>(line.substr(kMagic.size() + 1), where, "schema version");
      if (version != kManifestSchemaVersion) {
        throw SchemaError(where + ": unsupported schema version " + std::to_string(version));
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    if (line.starts_with("#label ")) {
      auto f = split_fields(line.substr(7), where);
      if (f.size() != 2) throw SchemaError(where + ": label line needs id|name");
      m.label_set.push_back({parse_number<int>(f[0], where, "label id"), f[1]});
      continue;
    }
    if (line.starts_with("#meta ")) {
      auto f = split_fields(line.substr(6), where);
      if (f.size() != 2) throw SchemaError(where + ": meta line needs key|value");
      m.metadata[f[0]] = f[1];
      continue;
    }
    if (line.starts_with("#")) continue;

    auto f = split_fields(line, where);
    if (f.size() != kFieldCount) {
      throw SchemaError(where + ": expected " + std::to_string(kFieldCount) + " fields, got " +
                        std::to_string(f.size()));
    }
    ClipRecord r;
    r.clip_id = f[0];
    r.driver_id = f[1];
    r.label = parse_number<int>(f[2], where, "label_id");
    r.frame_count = parse_number<int>(f[3], where, "frame_count");
    r.fps = parse_number<double>(f[4], where, "fps");
    try {
      r.partition = parse_partition(f[5]);
    } catch (const SchemaError& e) {
      throw SchemaError(where + ": " + e.what());
    }
    for (int k = 0; k < 3; ++k) r.sources[k] = f[6 + k];
    m.records.push_back(std::move(r));
  }
  if (!header_seen) throw SchemaError(origin + ": empty manifest file");
  if (m.label_set.empty()) m.label_set = default_label_set();
  validate(m);
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.string());
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  validate(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << serialize_manifest(m);
  if (!out) throw IoError("write failed for " + path.string());
}

std::map<int, std::size_t> class_histogram(const DatasetManifest& m) {
  std::map<int, std::size_t> h;
  for (const auto& l : m.label_set) h[l.id] = 0;
  for (const auto& r : m.records) ++h[r.label];
  return h;
}

std::map<Modality, std::vector<std::string>> missing_modalities(const DatasetManifest& m) {
  std::map<Modality, std::vector<std::string>> out;
  for (const auto& r : m.records) {
    for (auto mod : kAllModalities) {
      if (!r.has(mod)) out[mod].push_back(r.clip_id);
    }
  }
  return out;
}

std::map<Partition, std::vector<std::string>> drivers_by_partition(const DatasetManifest& m) {
  std::map<Partition, std::set<std::string>> sets;
  for (const auto& r : m.records) sets[r.partition].insert(r.driver_id);
  std::map<Partition, std::vector<std::string>> out;
  for (auto& [p, s] : sets) out[p].assign(s.begin(), s.end());
  return out;
}

}  // namespace dbm
