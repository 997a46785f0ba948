#pragma once

#include "rehab/catalog.hpp"
#include "rehab/dataset_builder.hpp"
#include "rehab/keypoint_io.hpp"
#include "rehab/media.hpp"
#include "rehab/pose_features.hpp"
#include "rehab/segmenter.hpp"
#include "rehab/service_logic.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifndef REHAB_SOURCE_DIR
#define REHAB_SOURCE_DIR "."
#endif

namespace rehab::testing {

inline std::filesystem::path source_dir() { return REHAB_SOURCE_DIR; }

inline ClassCatalog fixture_catalog() { return ClassCatalog::load(source_dir() / "config" / "classes.json"); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "rehab") {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Frame colour encoding a class label: red = 16 * label.
inline media::Image label_frame(dataset::LabelId label, int width = 32, int height = 32) {
  return media::Image::solid(width, height, static_cast<std::uint8_t>(16 * label), 96, 160);
}

/// Video whose frame colours follow the annotated spans (no action elsewhere).
inline media::GeneratedVideo labelled_video(const dataset::TimelineAnnotation& annotation, std::int64_t frame_count,
                                            int width = 32, int height = 32) {
  media::VideoInfo info{frame_count, annotation.fps, width, height};
  return media::GeneratedVideo(info, [annotation, width, height](std::int64_t f) {
    return label_frame(annotation.label_at(f), width, height);
  });
}

/// Reads the label back from the red channel of the middle sampled frame;
/// rounding absorbs lossy compression drift.
class StubClassifier final : public segment::WindowClassifier {
 public:
  std::vector<std::vector<double>> predict_proba(std::span<const segment::WindowInput> windows) override {
    std::vector<std::vector<double>> out;
    for (const auto& w : windows) {
      double red = 0.0;
      const auto& img = w.frames.at(w.frames.size() / 2);
      const std::size_t pixels = img.rgb.size() / 3;
      for (std::size_t p = 0; p < pixels; ++p) red += img.rgb[3 * p];
      red /= static_cast<double>(std::max<std::size_t>(1, pixels));
      const int label = std::clamp(static_cast<int>(std::lround(red / 16.0)), 0, dataset::kNumClasses - 1);
      std::vector<double> p(dataset::kNumClasses, 0.1 / (dataset::kNumClasses - 1));
      p[static_cast<std::size_t>(label)] = 0.9;
      out.push_back(std::move(p));
    }
    return out;
  }
  media::ResizeTo input_size() const override { return {16, 16}; }
  std::string fingerprint() const override { return "stub:red-channel"; }
};

/// BODY_25 record with a plausible upright upper body; the elbows swing
/// with the frame index so features vary over time.
inline pose::RawPoseFrame body25_frame(std::int64_t index, int width = 640, int height = 480) {
  pose::RawPoseFrame frame;
  frame.frame_index = index;
  frame.image_size = {width, height};
  frame.keypoints.assign(25, pose::RawKeypoint{std::nullopt, 0.0, 0.0, 0.0, 0.05});
  const double swing = 20.0 * std::sin(0.2 * static_cast<double>(index));
  auto set = [&](std::size_t i, double x, double y) { frame.keypoints[i] = {std::nullopt, x, y, 0.0, 0.9}; };
  set(0, 320, 100);           // nose
  set(1, 320, 160);           // neck
  set(2, 260, 165);           // right shoulder
  set(3, 240, 240 + swing);   // right elbow
  set(4, 235, 310 + swing);   // right wrist
  set(5, 380, 165);           // left shoulder
  set(6, 400, 240 - swing);   // left elbow
  set(7, 405, 310 - swing);   // left wrist
  set(8, 320, 330);           // mid hip
  set(15, 305, 90);           // right eye
  set(16, 335, 90);           // left eye
  set(17, 290, 95);           // right ear
  set(18, 350, 95);           // left ear
  return frame;
}

inline std::vector<pose::RawPoseFrame> body25_stream(std::int64_t frame_count) {
  std::vector<pose::RawPoseFrame> frames;
  for (std::int64_t i = 0; i < frame_count; ++i) frames.push_back(body25_frame(i));
  return frames;
}

inline std::string body25_stream_text(std::int64_t frame_count) {
  std::ostringstream out;
  pose::write_pose_stream(out, body25_stream(frame_count));
  return out.str();
}

/// Window start oracle: every start on the stride grid whose window fits.
inline std::vector<std::int64_t> enumerate_window_starts(std::int64_t frame_count) {
  std::vector<std::int64_t> starts;
  for (std::int64_t s = 0; s < frame_count; ++s) {
    if (s % 21 == 0 && s + 59 <= frame_count - 1) starts.push_back(s);
  }
  return starts;
}

/// Encodes a labelled video as MJPEG AVI bytes.
inline std::string labelled_video_bytes(const dataset::TimelineAnnotation& annotation, std::int64_t frame_count,
                                        const std::filesystem::path& scratch) {
  auto video = labelled_video(annotation, frame_count);
  const auto path = scratch / "fixture.avi";
  media::write_video(path, video);
  return read_file(path);
}

/// Fifteen patients over a 14-day window (2025-03-01..14), as
/// (sessions, enrolled days): 3/3, 1/4, 12/14, 8/14, 7/14, 6/14, six at 2/3,
/// 3/8, 3/8 and 2/4. 57 sessions; mean frequency 8.857142857... / 15.
struct AdherenceFixture {
  std::vector<service::PatientAdherenceInput> patients;
  service::Date start{std::chrono::year{2025}, std::chrono::month{3}, std::chrono::day{1}};
  service::Date end{std::chrono::year{2025}, std::chrono::month{3}, std::chrono::day{14}};
};

inline AdherenceFixture adherence_fixture() {
  using namespace std::chrono;
  AdherenceFixture fx;
  const std::vector<std::pair<int, int>> counts = {{3, 3},  {1, 4}, {12, 14}, {8, 14}, {7, 14}, {6, 14}, {2, 3}, {2, 3},
                                                   {2, 3},  {2, 3}, {2, 3},   {2, 3},  {3, 8},  {3, 8},  {2, 4}};
  const sys_days last{fx.end};
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto [sessions, enrolled] = counts[i];
    service::PatientAdherenceInput p;
    p.patient_id = "p" + std::to_string(i + 1);
    const sys_days first = last - days{enrolled - 1};
    p.enrollment_date = service::Date{first};
    for (int k = 0; k < sessions; ++k) {
      // One session per day from enrollment, wrapping for busy patients;
      // recorded at 10:00 local time.
      const sys_days day = first + days{k % enrolled};
      p.session_times.push_back(time_point_cast<seconds>(day + hours{10}));
    }
    fx.patients.push_back(std::move(p));
  }
  return fx;
}

}  // namespace rehab::testing
