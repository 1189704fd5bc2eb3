#include "dbm/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dbm/error.hpp"
#include "dbm/prep.hpp"
#include "dbm/rng.hpp"

namespace dbm::synth {

namespace {

constexpr double kHomeDepth = 0.95;
// Hand moves towards the camera in proportion to its excursion.
constexpr double kDepthPerReach = (kHomeDepth - 0.62) / kReachRadius;
constexpr double kPi = std::numbers::pi;

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T>
T parse_number(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw SchemaError("manifest metadata lacks '" + key + "'");
  T v{};
  const auto& s = it->second;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw SchemaError("bad value for '" + key + "': " + s);
  return v;
}

std::string two_digits(int v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", v);
  return buf;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_classes < 2) throw DomainError("synth needs at least two classes");
  if (drivers < 1 || clips_per_driver_per_class < 1) throw DomainError("synth counts must be >= 1");
  if (width < 64 || height < 64) throw DomainError("synth frames must be at least 64x64");
  if (!(fps > 0.0)) throw DomainError("fps must be positive");
  if (!(duration_mean >= 1.0) || duration_sd < 0.0 || min_duration < 1) throw DomainError("bad duration distribution");
}

std::map<std::string, std::string> SynthSpec::to_metadata() const {
  return {{"synth.classes", std::to_string(n_classes)},
          {"synth.drivers", std::to_string(drivers)},
          {"synth.clips", std::to_string(clips_per_driver_per_class)},
          {"synth.width", std::to_string(width)},
          {"synth.height", std::to_string(height)},
          {"synth.fps", fmt_double(fps)},
          {"synth.duration_mean", fmt_double(duration_mean)},
          {"synth.duration_sd", fmt_double(duration_sd)},
          {"synth.min_duration", std::to_string(min_duration)},
          {"synth.seed", std::to_string(seed)}};
}

SynthSpec SynthSpec::from_metadata(const std::map<std::string, std::string>& meta) {
  SynthSpec s;
  s.n_classes = parse_number<int>(meta, "synth.classes");
  s.drivers = parse_number<int>(meta, "synth.drivers");
  s.clips_per_driver_per_class = parse_number<int>(meta, "synth.clips");
  s.width = parse_number<int>(meta, "synth.width");
  s.height = parse_number<int>(meta, "synth.height");
  s.fps = parse_number<double>(meta, "synth.fps");
  s.duration_mean = parse_number<double>(meta, "synth.duration_mean");
  s.duration_sd = parse_number<double>(meta, "synth.duration_sd");
  s.min_duration = parse_number<int>(meta, "synth.min_duration");
  s.seed = parse_number<std::uint64_t>(meta, "synth.seed");
  s.validate();
  return s;
}

int class_directions(int n_classes) { return (n_classes + 1) / 2; }

double class_angle(int label, int n_classes) {
  const int d = class_directions(n_classes);
  return 2.0 * kPi * (label % d) / d;
}

double class_reach(int label, int n_classes) {
  return label < class_directions(n_classes) ? kReachRadius : kShortReachRadius;
}

ClipPlan plan_clip(const SynthSpec& spec, int index) {
  const int per_driver = spec.n_classes * spec.clips_per_driver_per_class;
  if (index < 0 || index >= spec.drivers * per_driver) throw DomainError("synthetic clip index out of range");
  ClipPlan p;
  p.index = index;
  p.driver = index / per_driver;
  p.label = (index % per_driver) / spec.clips_per_driver_per_class;
  Rng rng(derive_seed(derive_seed(spec.seed, "clip"), static_cast<std::uint64_t>(index)));
  p.frame_count = std::max(spec.min_duration, static_cast<int>(std::lround(normal(rng, spec.duration_mean, spec.duration_sd))));
  p.target_angle = class_angle(p.label, spec.n_classes) + uniform(rng, -0.08, 0.08);
  p.target_radius = class_reach(p.label, spec.n_classes) * uniform(rng, 0.9, 1.1);
  p.target_depth = kHomeDepth - kDepthPerReach * p.target_radius + uniform(rng, -0.01, 0.01);
  p.active = uniform(rng, 0.45, 1.0);
  p.onset = uniform(rng, 0.0, 1.0 - p.active);
  return p;
}

DatasetManifest generate(const SynthSpec& spec) {
  spec.validate();
  DatasetManifest m;
  m.label_set.clear();
  const auto defaults = default_label_set();
  for (int c = 0; c < spec.n_classes; ++c) {
    m.label_set.push_back({c, c < static_cast<int>(defaults.size()) ? defaults[c].name : "class_" + std::to_string(c)});
  }
  m.metadata = spec.to_metadata();
  const int total = spec.drivers * spec.n_classes * spec.clips_per_driver_per_class;
  for (int i = 0; i < total; ++i) {
    const ClipPlan p = plan_clip(spec, i);
    ClipRecord r;
    const int k = i % spec.clips_per_driver_per_class;
    r.clip_id = "d" + two_digits(p.driver) + "_c" + two_digits(p.label) + "_k" + std::to_string(k);
    r.driver_id = "driver_" + two_digits(p.driver);
    r.label = p.label;
    r.frame_count = p.frame_count;
    r.fps = spec.fps;
    const std::string loc = std::string(kLocatorScheme) + std::to_string(i);
    r.sources = {loc, loc, loc};
    m.records.push_back(std::move(r));
  }
  return m;
}

// ---------------------------------------------------------------------------- rendering

struct Renderer::Style {
  FrameTensor rgb, ir, depth_q;  // static scene (background, body, head)
  DepthFrameMetric depth;
  double hand_radius = 0.0;
  std::array<std::uint8_t, 3> hand_rgb{};
  std::uint8_t hand_ir = 0;
};

namespace {

struct Frame {
  int w, h;
  double side, x0, y0;
  Frame(int width, int height)
      : w(width), h(height), side(std::min(width, height)), x0((width - side) / 2.0), y0((height - side) / 2.0) {}
  // unit-square point to pixel, optionally through the RGB zoom
  double px(double u, bool rgb) const { return x0 + (rgb ? 0.5 + (u - 0.5) * kRgbZoom : u) * side; }
  double py(double v, bool rgb) const { return y0 + (rgb ? 0.5 + (v - 0.5) * kRgbZoom : v) * side; }
  double len(double r, bool rgb) const { return r * side * (rgb ? kRgbZoom : 1.0); }
};

template <typename F>
void fill_ellipse(int w, int h, double cx, double cy, double rx, double ry, F&& f) {
  const int y_lo = std::max(0, static_cast<int>(std::floor(cy - ry)));
  const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(cy + ry)));
  const int x_lo = std::max(0, static_cast<int>(std::floor(cx - rx)));
  const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(cx + rx)));
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
      if (dx * dx + dy * dy <= 1.0) f(x, y);
    }
  }
}

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }
double round_mm(double meters) { return std::round(meters * 1000.0) / 1000.0; }

}  // namespace

Renderer::Renderer(SynthSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

const Renderer::Style& Renderer::style(int driver) const {
  std::lock_guard lock(mutex_);
  auto it = styles_.find(driver);
  if (it != styles_.end()) return *it->second;

  Rng rng(derive_seed(derive_seed(spec_.seed, "driver"), static_cast<std::uint64_t>(driver)));
  auto s = std::make_shared<Style>();
  const int w = spec_.width, h = spec_.height;
  const Frame fr(w, h);
  s->rgb = FrameTensor(w, h, 3);
  s->ir = FrameTensor(w, h, 1);
  s->depth = DepthFrameMetric(w, h, 1);

  // background: base level with a faint periodic texture
  const double fx = uniform(rng, 0.01, 0.04), fy = uniform(rng, 0.01, 0.04);
  const double phx = uniform(rng, 0.0, 2 * kPi), phy = uniform(rng, 0.0, 2 * kPi);
  const double ir_bg = uniform(rng, 30, 60);
  std::array<double, 3> rgb_bg{};
  for (auto& c : rgb_bg) c = uniform(rng, 40, 110);
  const double d_bg = uniform(rng, 2.2, 2.8);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double tex = 8.0 * std::sin(fx * x + phx) * std::cos(fy * y + phy);
      s->ir.at(0, y, x) = clamp_u8(ir_bg + tex + 10.0 * y / h);
      for (int c = 0; c < 3; ++c) s->rgb.at(c, y, x) = clamp_u8(rgb_bg[c] + tex);
      s->depth.at(0, y, x) = static_cast<float>(round_mm(d_bg + 0.2 * x / w));
    }
  }
  // sensor holes in the depth background
  for (int k = 0; k < 3; ++k) {
    const int hw = static_cast<int>(uniform(rng, 10, 30)), hh = static_cast<int>(uniform(rng, 10, 30));
    const int hx = static_cast<int>(uniform(rng, 0, w - hw)), hy = static_cast<int>(uniform(rng, 0, h / 3.0));
    for (int y = hy; y < hy + hh; ++y)
      for (int x = hx; x < hx + hw; ++x) s->depth.at(0, y, x) = 0.0f;
  }

  // torso and head
  const double body_rx = 0.28 * uniform(rng, 0.9, 1.1), body_ry = 0.3 * uniform(rng, 0.9, 1.1);
  const double head_y = 0.3 + uniform(rng, -0.03, 0.03), head_r = 0.1 * uniform(rng, 0.9, 1.1);
  const double ir_body = uniform(rng, 95, 125), ir_head = uniform(rng, 120, 145);
  std::array<double, 3> shirt{}, skin{};
  for (auto& c : shirt) c = uniform(rng, 30, 120);
  skin = {uniform(rng, 145, 175), uniform(rng, 115, 140), uniform(rng, 95, 120)};
  const double d_body = round_mm(1.2 + uniform(rng, -0.05, 0.05)), d_head = round_mm(d_body - 0.05);
  for (bool rgb : {false, true}) {
    const double bx = fr.px(0.5, rgb), by = fr.py(0.95, rgb);
    fill_ellipse(w, h, bx, by, fr.len(body_rx, rgb), fr.len(body_ry, rgb), [&](int x, int y) {
      if (rgb) {
        for (int c = 0; c < 3; ++c) s->rgb.at(c, y, x) = clamp_u8(shirt[c]);
      } else {
        s->ir.at(0, y, x) = clamp_u8(ir_body);
        s->depth.at(0, y, x) = static_cast<float>(d_body);
      }
    });
    const double hx = fr.px(0.5, rgb), hy = fr.py(head_y, rgb), hr = fr.len(head_r, rgb);
    fill_ellipse(w, h, hx, hy, hr, hr, [&](int x, int y) {
      if (rgb) {
        for (int c = 0; c < 3; ++c) s->rgb.at(c, y, x) = clamp_u8(skin[c]);
      } else {
        s->ir.at(0, y, x) = clamp_u8(ir_head);
        s->depth.at(0, y, x) = static_cast<float>(d_head);
      }
    });
  }
  s->depth_q = prep::quantize_depth_frame(s->depth);

  s->hand_radius = uniform(rng, 0.05, 0.065);
  s->hand_rgb = {clamp_u8(uniform(rng, 220, 250)), clamp_u8(uniform(rng, 190, 220)), clamp_u8(uniform(rng, 165, 195))};
  s->hand_ir = clamp_u8(uniform(rng, 205, 245));

  styles_[driver] = s;
  return *s;
}

namespace {
// Fraction of the full reach at `frame`.
double excursion(const ClipPlan& plan, int frame) {
  const double t = ((frame + 0.5) / plan.frame_count - plan.onset) / plan.active;
  return t <= 0.0 || t >= 1.0 ? 0.0 : std::sin(kPi * t);
}
}  // namespace

std::array<double, 2> Renderer::hand_position(const ClipPlan& plan, int frame) const {
  const double b = excursion(plan, frame);
  return {kHomeX + b * plan.target_radius * std::cos(plan.target_angle),
          kHomeY + b * plan.target_radius * std::sin(plan.target_angle)};
}

namespace {
double hand_depth(const ClipPlan& plan, int frame) {
  return round_mm(kHomeDepth + excursion(plan, frame) * (plan.target_depth - kHomeDepth));
}
}  // namespace

FrameTensor Renderer::render(const ClipPlan& plan, Modality m, int frame) const {
  if (frame < 0 || frame >= plan.frame_count) throw DomainError("synthetic frame index out of range");
  const Style& s = style(plan.driver);
  const Frame fr(spec_.width, spec_.height);
  const bool rgb = m == Modality::Rgb;
  const auto [u, v] = hand_position(plan, frame);
  const double cx = fr.px(u, rgb), cy = fr.py(v, rgb), r = fr.len(s.hand_radius, rgb);
  switch (m) {
    case Modality::Rgb: {
      FrameTensor out = s.rgb;
      fill_ellipse(out.width(), out.height(), cx, cy, r, r, [&](int x, int y) {
        for (int c = 0; c < 3; ++c) out.at(c, y, x) = s.hand_rgb[c];
      });
      return out;
    }
    case Modality::Ir: {
      FrameTensor out = s.ir;
      fill_ellipse(out.width(), out.height(), cx, cy, r, r, [&](int x, int y) { out.at(0, y, x) = s.hand_ir; });
      return out;
    }
    case Modality::Depth: {
      FrameTensor out = s.depth_q;
      const std::uint8_t q = prep::quantize_depth(static_cast<float>(hand_depth(plan, frame)));
      fill_ellipse(out.width(), out.height(), cx, cy, r, r, [&](int x, int y) { out.at(0, y, x) = q; });
      return out;
    }
  }
  throw DomainError("unknown modality");
}

DepthFrameMetric Renderer::render_depth(const ClipPlan& plan, int frame) const {
  if (frame < 0 || frame >= plan.frame_count) throw DomainError("synthetic frame index out of range");
  const Style& s = style(plan.driver);
  const Frame fr(spec_.width, spec_.height);
  const auto [u, v] = hand_position(plan, frame);
  DepthFrameMetric out = s.depth;
  const float z = static_cast<float>(hand_depth(plan, frame));
  const double r = fr.len(s.hand_radius, false);
  fill_ellipse(out.width(), out.height(), fr.px(u, false), fr.py(v, false), r, r,
               [&](int x, int y) { out.at(0, y, x) = z; });
  return out;
}

// ---------------------------------------------------------------------------- store

bool SynthFrameStore::is_synthetic(const std::string& locator) {
  return std::string_view(locator).starts_with(kLocatorScheme);
}

ClipPlan SynthFrameStore::plan(const ClipRecord& clip, Modality m, int index, int& frame) const {
  if (!clip.has(m)) throw ContractError("clip " + clip.clip_id + " has no " + std::string(to_string(m)) + " source");
  const Locator loc = Locator::parse(clip.source(m));
  if (!is_synthetic(loc.path)) throw ContractError("not a synthetic locator: " + loc.path);
  const std::string_view num = std::string_view(loc.path).substr(kLocatorScheme.size());
  int id = 0;
  auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), id);
  if (ec != std::errc{} || p != num.data() + num.size()) throw SchemaError("bad synthetic locator " + loc.path);
  if (index < 0 || index >= clip.frame_count) {
    throw DomainError("frame " + std::to_string(index) + " outside clip " + clip.clip_id);
  }
  frame = static_cast<int>(loc.first_frame) + index;
  return plan_clip(renderer_.spec(), id);
}

FrameTensor SynthFrameStore::load(const ClipRecord& clip, Modality m, int index) const {
  int frame = 0;
  const ClipPlan p = plan(clip, m, index, frame);
  FrameTensor f = renderer_.render(p, m, frame);
  if (f.width() != prep::kFrameWidth || f.height() != prep::kFrameHeight) f = prep::resize_frame(f);
  return f;
}

DepthFrameMetric SynthFrameStore::load_depth_metric(const ClipRecord& clip, int index) const {
  int frame = 0;
  const ClipPlan p = plan(clip, Modality::Depth, index, frame);
  return renderer_.render_depth(p, frame);
}

DatasetManifest materialize(const DatasetManifest& m, const FrameStore& store, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const auto* synth_store = dynamic_cast<const SynthFrameStore*>(&store);
  DatasetManifest out = m;
  for (auto& r : out.records) {
    for (Modality mod : {Modality::Rgb, Modality::Ir, Modality::Depth}) {
      if (!r.has(mod)) continue;
      const fs::path rel = fs::path("frames") / r.clip_id / std::string(to_string(mod));
      const fs::path abs = dir / rel;
      std::error_code ec;
      fs::create_directories(abs, ec);
      if (ec) throw IoError("cannot create " + abs.string() + ": " + ec.message());
      const ClipRecord& src = m.records[&r - out.records.data()];
      for (int i = 0; i < r.frame_count; ++i) {
        const fs::path file = abs / DiskFrameStore::frame_file_name(i);
        if (mod == Modality::Depth && synth_store != nullptr) {
          write_depth_mm(file, synth_store->load_depth_metric(src, i));
        } else {
          write_frame(file, store.load(src, mod, i));
        }
      }
      r.source(mod) = rel.generic_string();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------- oracle

namespace {

constexpr int kGridStep = 4;

// Centroid of the brightest blob in unit-square coordinates; false when the frame is dark.
bool blob_centroid(const FrameTensor& f, Modality m, double& u, double& v) {
  const int w = f.width(), h = f.height();
  const int nc = f.channels();
  double best = 0.0;
  for (int y = kGridStep / 2; y < h; y += kGridStep) {
    for (int x = kGridStep / 2; x < w; x += kGridStep) {
      double val = 0.0;
      for (int c = 0; c < nc; ++c) val += f.at(c, y, x);
      best = std::max(best, val);
    }
  }
  if (best < 10.0 * nc) return false;
  const double cut = best - std::max(3.0, 0.06 * best);
  double sx = 0.0, sy = 0.0, n = 0.0;
  for (int y = kGridStep / 2; y < h; y += kGridStep) {
    for (int x = kGridStep / 2; x < w; x += kGridStep) {
      double val = 0.0;
      for (int c = 0; c < nc; ++c) val += f.at(c, y, x);
      if (val >= cut) {
        sx += x + 0.5;
        sy += y + 0.5;
        n += 1.0;
      }
    }
  }
  const double side = std::min(w, h);
  u = (sx / n - (w - side) / 2.0) / side;
  v = (sy / n - (h - side) / 2.0) / side;
  if (m == Modality::Rgb) {
    u = 0.5 + (u - 0.5) / kRgbZoom;
    v = 0.5 + (v - 0.5) / kRgbZoom;
  }
  return true;
}

}  // namespace

int oracle_classify(const std::vector<FrameTensor>& frames, Modality m, int n_classes) {
  if (n_classes < 1) throw DomainError("n_classes must be positive");
  bool seen = false;
  double best_r = -1.0, best_dx = 0.0, best_dy = 0.0;
  for (const auto& f : frames) {
    double u = 0.0, v = 0.0;
    if (f.empty() || !blob_centroid(f, m, u, v)) continue;
    seen = true;
    const double dx = u - kHomeX, dy = v - kHomeY;
    const double r = std::hypot(dx, dy);
    if (r > best_r) best_r = r, best_dx = dx, best_dy = dy;
  }
  if (!seen) return kRejectLabel;
  // nearest class template at the peak of the reach
  int label = 0;
  double best = 1e9;
  for (int c = 0; c < n_classes; ++c) {
    const double r = class_reach(c, n_classes), a = class_angle(c, n_classes);
    const double d = std::hypot(best_dx - r * std::cos(a), best_dy - r * std::sin(a));
    if (d < best) best = d, label = c;
  }
  return label;
}

int oracle_classify(const FrameStore& store, const ClipRecord& clip, Modality m, int n_classes) {
  std::vector<FrameTensor> frames;
  frames.reserve(clip.frame_count);
  for (int i = 0; i < clip.frame_count; ++i) frames.push_back(store.load(clip, m, i));
  return oracle_classify(frames, m, n_classes);
}

}  // namespace dbm::synth
