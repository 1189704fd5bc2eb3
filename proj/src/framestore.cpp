#include "dbm/framestore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/videoio.hpp>

#include "dbm/error.hpp"
#include "dbm/prep.hpp"
#include "dbm/synth.hpp"

namespace dbm {

namespace fs = std::filesystem;

namespace {

FrameTensor from_mat(const cv::Mat& mat, Modality m) {
  if (mat.empty()) throw IoError("decoded an empty frame");
  if (m == Modality::Depth && mat.depth() == CV_16U) {
    DepthFrameMetric metric(mat.cols, mat.rows, 1);
    for (int y = 0; y < mat.rows; ++y) {
      const auto* row = mat.ptr<std::uint16_t>(y);
      for (int x = 0; x < mat.cols; ++x) metric.at(0, y, x) = static_cast<float>(row[x * mat.channels()] / 1000.0);
    }
    return prep::quantize_depth_frame(metric);
  }
  cv::Mat u8 = mat;
  if (mat.depth() == CV_16U) mat.convertTo(u8, CV_8U, 1.0 / 257.0);
  else if (mat.depth() != CV_8U) throw IoError("unsupported pixel depth");

  const int want = m == Modality::Rgb ? 3 : 1;
  FrameTensor out(u8.cols, u8.rows, want);
  for (int y = 0; y < u8.rows; ++y) {
    const std::uint8_t* row = u8.ptr<std::uint8_t>(y);
    const int nc = u8.channels();
    for (int x = 0; x < u8.cols; ++x) {
      const std::uint8_t* px = row + x * nc;
      if (want == 3) {
        if (nc >= 3) {
          out.at(0, y, x) = px[2];  // OpenCV stores BGR
          out.at(1, y, x) = px[1];
          out.at(2, y, x) = px[0];
        } else {
          out.at(0, y, x) = out.at(1, y, x) = out.at(2, y, x) = px[0];
        }
      } else {
        // IR/depth recorded as colour images carry the value in every channel
        out.at(0, y, x) = nc >= 3 ? static_cast<std::uint8_t>((px[0] + px[1] + px[2] + 1) / 3) : px[0];
      }
    }
  }
  return out;
}

cv::Mat to_mat(const FrameTensor& f) {
  if (f.channels() == 3) {
    cv::Mat mat(f.height(), f.width(), CV_8UC3);
    for (int y = 0; y < f.height(); ++y) {
      auto* row = mat.ptr<std::uint8_t>(y);
      for (int x = 0; x < f.width(); ++x) {
        row[3 * x] = f.at(2, y, x);
        row[3 * x + 1] = f.at(1, y, x);
        row[3 * x + 2] = f.at(0, y, x);
      }
    }
    return mat;
  }
  if (f.channels() != 1) throw ContractError("only 1- and 3-channel frames can be written");
  cv::Mat mat(f.height(), f.width(), CV_8UC1);
  for (int y = 0; y < f.height(); ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < f.width(); ++x) row[x] = f.at(0, y, x);
  }
  return mat;
}

void write_mat(const fs::path& file, const cv::Mat& mat) {
  bool ok = false;
  try {
    ok = cv::imwrite(file.string(), mat);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + file.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + file.string());
}

}  // namespace

DiskFrameStore::DiskFrameStore(fs::path base) : base_(std::move(base)) {}

std::string DiskFrameStore::frame_file_name(std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06lld.png", static_cast<long long>(index));
  return buf;
}

FrameTensor DiskFrameStore::load(const ClipRecord& clip, Modality m, int index) const {
  if (!clip.has(m)) throw ContractError("clip " + clip.clip_id + " has no " + std::string(to_string(m)) + " source");
  if (index < 0 || index >= clip.frame_count) {
    throw DomainError("frame " + std::to_string(index) + " outside clip " + clip.clip_id);
  }
  const Locator loc = Locator::parse(clip.source(m));
  fs::path path(loc.path);
  if (path.is_relative() && !base_.empty()) path = base_ / path;
  const std::int64_t frame = loc.first_frame + index;

  cv::Mat mat;
  if (fs::is_directory(path)) {
    const fs::path file = path / frame_file_name(frame);
    mat = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw IoError("cannot read frame " + file.string());
  } else {
    cv::VideoCapture cap(path.string());
    if (!cap.isOpened()) throw IoError("cannot open " + path.string());
    cap.set(cv::CAP_PROP_POS_FRAMES, static_cast<double>(frame));
    if (!cap.read(mat) || mat.empty()) {
      throw IoError("cannot read frame " + std::to_string(frame) + " of " + path.string());
    }
  }
  FrameTensor f = from_mat(mat, m);
  if (f.width() != prep::kFrameWidth || f.height() != prep::kFrameHeight) f = prep::resize_frame(f);
  return f;
}

namespace {

class CompositeFrameStore final : public FrameStore {
 public:
  CompositeFrameStore(std::unique_ptr<synth::SynthFrameStore> synth, DiskFrameStore disk)
      : synth_(std::move(synth)), disk_(std::move(disk)) {}

  FrameTensor load(const ClipRecord& clip, Modality m, int index) const override {
    if (synth_ && synth::SynthFrameStore::is_synthetic(clip.source(m))) return synth_->load(clip, m, index);
    return disk_.load(clip, m, index);
  }

 private:
  std::unique_ptr<synth::SynthFrameStore> synth_;
  DiskFrameStore disk_;
};

}  // namespace

std::unique_ptr<FrameStore> open_frame_store(const DatasetManifest& m, const fs::path& base) {
  bool any_synth = false;
  for (const auto& r : m.records)
    for (const auto& s : r.sources) any_synth = any_synth || synth::SynthFrameStore::is_synthetic(s);
  if (!any_synth) return std::make_unique<DiskFrameStore>(base);
  auto synth = std::make_unique<synth::SynthFrameStore>(synth::SynthSpec::from_metadata(m.metadata));
  return std::make_unique<CompositeFrameStore>(std::move(synth), DiskFrameStore(base));
}

std::function<bool(FrameTensor&)> open_camera(int index) {
  auto cap = std::make_shared<cv::VideoCapture>(index);
  if (!cap->isOpened()) throw IoError("cannot open camera " + std::to_string(index));
  return [cap](FrameTensor& out) {
    cv::Mat mat;
    if (!cap->read(mat) || mat.empty()) return false;
    out = from_mat(mat, Modality::Rgb);
    if (out.width() != prep::kFrameWidth || out.height() != prep::kFrameHeight) out = prep::resize_frame(out);
    return true;
  };
}

void write_frame(const fs::path& file, const FrameTensor& frame) { write_mat(file, to_mat(frame)); }

void write_depth_mm(const fs::path& file, const DepthFrameMetric& depth) {
  cv::Mat mat(depth.height(), depth.width(), CV_16UC1);
  for (int y = 0; y < depth.height(); ++y) {
    auto* row = mat.ptr<std::uint16_t>(y);
    for (int x = 0; x < depth.width(); ++x) {
      const double mm = std::round(static_cast<double>(depth.at(0, y, x)) * 1000.0);
      row[x] = static_cast<std::uint16_t>(std::clamp(mm, 0.0, 65535.0));
    }
  }
  write_mat(file, mat);
}

}  // namespace dbm
