#include "dbm/prep.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "dbm/error.hpp"
#include "dbm/rng.hpp"

namespace dbm::prep {

std::uint8_t quantize_depth(double d_m) {
  if (std::isnan(d_m) || d_m < 0.0) throw DomainError("depth must be non-negative");
  if (d_m == 0.0) return 0;
  const double v = std::floor(255.0 * std::min(kMinDepthMeters / d_m, 1.0));
  return static_cast<std::uint8_t>(v);
}

QuantizedFrame quantize_depth_frame(const DepthFrameMetric& depth) {
  QuantizedFrame out(depth.width(), depth.height(), depth.channels());
  const auto& in = depth.data();
  auto& dst = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) dst[i] = quantize_depth(in[i]);
  return out;
}

FrameTensor resize_frame(const FrameTensor& frame, int width, int height, Interpolation interp) {
  if (frame.empty()) throw DomainError("cannot resize an empty frame");
  return crop_resize(frame, Rect{0, 0, frame.width(), frame.height()}, width, height, interp);
}

std::vector<FrameRange> split_clip(FrameRange frames, const WindowingPolicy& policy) {
  if (frames.count < 1) throw DomainError("cannot split an empty frame range");
  if (policy.target_span < 1) throw DomainError("target span must be at least 1");
  const std::int64_t span = policy.target_span;
  if (frames.count <= span) return {frames};
  // round(count / span), halves rounded up
  const std::int64_t k = (2 * frames.count + span) / (2 * span);
  const std::int64_t base = frames.count / k;
  const std::int64_t extra = frames.count % k;
  std::vector<FrameRange> chunks;
  chunks.reserve(static_cast<std::size_t>(k));
  std::int64_t at = frames.first;
  for (std::int64_t i = 0; i < k; ++i) {
    const std::int64_t len = base + (i < extra ? 1 : 0);
    chunks.push_back({at, len});
    at += len;
  }
  return chunks;
}

DatasetManifest split_clips(const DatasetManifest& m, const WindowingPolicy& policy) {
  DatasetManifest out;
  out.label_set = m.label_set;
  out.metadata = m.metadata;
  for (const auto& r : m.records) {
    const auto chunks = split_clip({0, r.frame_count}, policy);
    if (chunks.size() == 1) {
      out.records.push_back(r);
      continue;
    }
    for (std::size_t k = 0; k < chunks.size(); ++k) {
      ClipRecord c = r;
      c.clip_id = r.clip_id + "_s" + std::to_string(k);
      c.frame_count = static_cast<int>(chunks[k].count);
      for (auto& src : c.sources) {
        if (src.empty()) continue;
        auto loc = Locator::parse(src);
        loc.first_frame += chunks[k].first;
        src = loc.str();
      }
      out.records.push_back(std::move(c));
    }
  }
  validate(out);
  return out;
}

DatasetManifest balance_classes(const DatasetManifest& m, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (const auto& l : m.label_set) by_class[l.id];
  for (std::size_t i = 0; i < m.records.size(); ++i) by_class[m.records[i].label].push_back(i);

  std::vector<std::size_t> counts;
  for (const auto& [label, idx] : by_class) {
    if (idx.empty()) {
      throw BalanceError("class " + std::to_string(label) + " (" + m.label(label).name + ") has no clips");
    }
    counts.push_back(idx.size());
  }
  if (counts.empty()) return m;
  std::sort(counts.begin(), counts.end());
  const std::size_t n = counts.size();
  const std::size_t target = n % 2 == 1 ? counts[n / 2] : (counts[n / 2 - 1] + counts[n / 2]) / 2;

  // copies[i]: how many times record i appears in the output (0 = dropped).
  std::vector<std::size_t> copies(m.records.size(), 0);
  for (const auto& [label, idx] : by_class) {
    Rng rng(derive_seed(derive_seed(seed, "balance"), static_cast<std::uint64_t>(label)));
    std::vector<std::size_t> order = idx;
    shuffle(order.begin(), order.end(), rng);
    if (idx.size() >= target) {
      for (std::size_t k = 0; k < target; ++k) copies[order[k]] = 1;
    } else {
      for (auto i : idx) copies[i] = 1;
      for (std::size_t k = 0; k < target - idx.size(); ++k) ++copies[order[k % order.size()]];
    }
  }

  DatasetManifest out;
  out.label_set = m.label_set;
  out.metadata = m.metadata;
  std::set<std::string> ids;
  for (const auto& r : m.records) ids.insert(r.clip_id);
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    if (copies[i] == 0) continue;
    out.records.push_back(m.records[i]);
    for (std::size_t k = 1; k < copies[i]; ++k) {
      ClipRecord dup = m.records[i];
      std::size_t suffix = k;
      do {
        dup.clip_id = m.records[i].clip_id + "_dup" + std::to_string(suffix++);
      } while (ids.contains(dup.clip_id));
      ids.insert(dup.clip_id);
      out.records.push_back(std::move(dup));
    }
  }
  validate(out);
  return out;
}

SplitRatios SplitRatios::parse(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || ptr != item.data() + item.size() || !(v >= 0.0)) {
      throw DomainError("invalid ratio '" + text + "'");
    }
    parts.push_back(v);
  }
  if (parts.size() != 3) throw DomainError("ratios need three parts train:val:test, got '" + text + "'");
  if (parts[0] + parts[1] + parts[2] <= 0.0) throw DomainError("ratios must not all be zero");
  return {parts[0], parts[1], parts[2]};
}

DatasetManifest split_by_driver(const DatasetManifest& m, SplitRatios ratios, std::uint64_t seed) {
  const Partition parts[3] = {Partition::Train, Partition::Val, Partition::Test};
  const double weights[3] = {ratios.train, ratios.val, ratios.test};
  const double wsum = weights[0] + weights[1] + weights[2];
  if (!(wsum > 0.0) || weights[0] < 0 || weights[1] < 0 || weights[2] < 0) {
    throw SplitError("invalid split ratios");
  }
  int active = 0;
  for (double w : weights) active += w > 0.0 ? 1 : 0;

  std::map<std::string, std::size_t> driver_clips;
  for (const auto& r : m.records) ++driver_clips[r.driver_id];
  if (static_cast<int>(driver_clips.size()) < active) {
    throw SplitError("need at least " + std::to_string(active) + " drivers, found " +
                     std::to_string(driver_clips.size()));
  }

  struct Entry {
    std::string driver;
    std::size_t clips;
    std::uint64_t tiebreak;
  };
  std::vector<Entry> order;
  for (const auto& [d, n] : driver_clips) order.push_back({d, n, derive_seed(seed, d)});
  std::sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) {
    if (a.clips != b.clips) return a.clips > b.clips;
    if (a.tiebreak != b.tiebreak) return a.tiebreak < b.tiebreak;
    return a.driver < b.driver;
  });

  const double total = static_cast<double>(m.records.size());
  double quota[3];
  for (int p = 0; p < 3; ++p) quota[p] = weights[p] / wsum * total;
  double assigned[3] = {0, 0, 0};
  int drivers_in[3] = {0, 0, 0};
  std::map<std::string, Partition> assignment;

  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto remaining = static_cast<int>(order.size() - i);
    int empty = 0;
    for (int p = 0; p < 3; ++p) empty += (weights[p] > 0.0 && drivers_in[p] == 0) ? 1 : 0;
    int best = -1;
    if (remaining <= empty) {
      // Every requested partition must receive at least one driver.
      for (int p = 0; p < 3 && best < 0; ++p) {
        if (weights[p] > 0.0 && drivers_in[p] == 0) best = p;
      }
    } else {
      double best_deficit = 0;
      for (int p = 0; p < 3; ++p) {
        if (weights[p] <= 0.0) continue;
        const double deficit = quota[p] - assigned[p];
        if (best < 0 || deficit > best_deficit) {
          best = p;
          best_deficit = deficit;
        }
      }
    }
    assigned[best] += static_cast<double>(order[i].clips);
    ++drivers_in[best];
    assignment[order[i].driver] = parts[best];
  }

  DatasetManifest out = m;
  for (auto& r : out.records) r.partition = assignment.at(r.driver_id);
  validate(out);
  return out;
}

PrepResult prepare(const DatasetManifest& m, const PrepOptions& options) {
  PrepResult result;
  auto& report = result.report;
  report.counts_before = class_histogram(m);

  DatasetManifest cur = split_clips(m, options.windowing);
  if (options.balance) cur = balance_classes(cur, options.seed);
  cur = split_by_driver(cur, options.ratios, options.seed);

  report.counts_after = class_histogram(cur);
  std::map<int, std::vector<int>> lengths;
  for (const auto& r : cur.records) {
    lengths[r.label].push_back(r.frame_count);
    ++report.duration_histogram[(r.frame_count / 10) * 10];
    ++report.clips_per_partition[r.partition];
  }
  for (const auto& [label, ls] : lengths) {
    DurationStats s;
    s.clips = ls.size();
    s.mean = std::accumulate(ls.begin(), ls.end(), 0.0) / static_cast<double>(ls.size());
    double var = 0;
    for (int l : ls) var += (l - s.mean) * (l - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(ls.size()));
    s.min = *std::min_element(ls.begin(), ls.end());
    s.max = *std::max_element(ls.begin(), ls.end());
    report.duration_by_class[label] = s;
  }
  for (const auto& [p, drivers] : drivers_by_partition(cur)) report.drivers_per_partition[p] = drivers.size();
  for (const auto& [mod, ids] : missing_modalities(cur)) report.missing_modalities[mod] = ids.size();

  result.manifest = std::move(cur);
  return result;
}

nlohmann::json to_json(const PrepReport& report) {
  using nlohmann::json;
  auto counts = [](const std::map<int, std::size_t>& h) {
    json j = json::object();
    for (const auto& [k, v] : h) j[std::to_string(k)] = v;
    return j;
  };
  json j;
  j["counts_before"] = counts(report.counts_before);
  j["counts_after"] = counts(report.counts_after);
  j["duration_histogram"] = counts(report.duration_histogram);
  json by_class = json::object();
  for (const auto& [label, s] : report.duration_by_class) {
    by_class[std::to_string(label)] = {{"clips", s.clips}, {"mean", s.mean}, {"stddev", s.stddev},
                                       {"min", s.min},     {"max", s.max}};
  }
  j["duration_by_class"] = by_class;
  json parts = json::object();
  for (const auto& [p, n] : report.clips_per_partition) {
    const auto it = report.drivers_per_partition.find(p);
    parts[std::string(to_string(p))] = {{"clips", n},
                                        {"drivers", it == report.drivers_per_partition.end() ? 0 : it->second}};
  }
  j["partitions"] = parts;
  json missing = json::object();
  for (const auto& [mod, n] : report.missing_modalities) missing[std::string(to_string(mod))] = n;
  j["missing_modalities"] = missing;
  return j;
}

}  // namespace dbm::prep
