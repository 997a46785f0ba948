#pragma once

#include "rehab/dataset_builder.hpp"
#include "rehab/media.hpp"
#include "rehab/pose_features.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rehab::segment {

using dataset::LabelId;

inline constexpr double kLowConfidenceThreshold = 0.4;
inline constexpr std::int64_t kDefaultMinSegmentFrames = 45;  // 1.5 s at 30 fps
inline constexpr int kDefaultSmoothingWidth = 5;

/// One classifier input: the 10 sampled frames and their skeleton rows.
struct WindowInput {
  std::int64_t start_frame = 0;
  std::vector<media::Image> frames;
  pose::FeatureMatrix skeleton;  // frames.size() x 17
};

/// Anything that maps windows to class probabilities (16 per window).
class WindowClassifier {
 public:
  virtual ~WindowClassifier() = default;
  virtual std::vector<std::vector<double>> predict_proba(std::span<const WindowInput> windows) = 0;
  /// Frame size the classifier wants; frames are resized before the call.
  virtual media::ResizeTo input_size() const = 0;
  virtual std::string fingerprint() const = 0;
};

struct WindowPrediction {
  std::int64_t start_frame = 0;
  LabelId label = dataset::kNoAction;
  double confidence = 0.0;  // probability of `label`
  std::vector<double> probabilities;
};

struct ActionSegment {
  std::string segment_id;
  std::string video_id;
  LabelId label = 1;
  std::int64_t start_frame = 0;
  std::int64_t end_frame = 0;  // inclusive
  double mean_confidence = 0.0;
  bool needs_review = false;
  std::string subclip_uri;

  std::int64_t frame_count() const noexcept { return end_frame - start_frame + 1; }
};

struct PredictOptions {
  std::size_t batch_size = 16;
};

/// One prediction per window of `extract_windows(frame_count)`, in order.
/// `pose_frames` is the pose stream for the video; gaps are densified. Throws
/// DependencyError when the pose stream is empty.
std::vector<WindowPrediction> predict_windows(media::VideoSource& video, std::span<const pose::RawPoseFrame> pose_frames,
                                              const pose::KeypointLayout& layout, WindowClassifier& classifier,
                                              const PredictOptions& options = {});

/// Majority vote over the windows covering each frame. Ties prefer an action
/// over "no action", then the earliest window. Uncovered frames take the label
/// of the nearest window.
std::vector<LabelId> frame_labels(std::span<const WindowPrediction> predictions, std::int64_t frame_count);

struct SegmentOptions {
  std::int64_t min_segment_frames = kDefaultMinSegmentFrames;
  int smoothing_width = kDefaultSmoothingWidth;  // odd, in frames
};

/// Label runs after a sliding majority filter. Action runs shorter than
/// `min_segment_frames` are absorbed when both neighbours share a label and
/// otherwise become "no action"; the filter repeats until the relabelled
/// sequence is stable. "No action" runs are dropped. Segment ids, video id
/// and confidences are left for the caller.
std::vector<ActionSegment> smooth_and_segment(std::span<const LabelId> labels, const SegmentOptions& options = {});

/// Per-frame labels implied by a segment list (uncovered frames "no action").
std::vector<LabelId> render_labels(std::span<const ActionSegment> segments, std::int64_t frame_count);

/// Mean top-class confidence of windows that overlap a segment and predict
/// its label; sets `needs_review` below the low-confidence threshold.
void attach_confidence(std::vector<ActionSegment>& segments, std::span<const WindowPrediction> predictions);

/// Full pass: frame labels, smoothing, confidences, ids "<video>-seg<k>".
std::vector<ActionSegment> segment_video(const std::string& video_id, std::span<const WindowPrediction> predictions,
                                         std::int64_t frame_count, const SegmentOptions& options = {});

/// Writes `<dir>/<segment_id>.avi` for every segment and fills `subclip_uri`.
void extract_subclips(media::VideoSource& video, std::vector<ActionSegment>& segments,
                      const std::filesystem::path& out_dir);

std::string segments_to_json(std::span<const ActionSegment> segments);
std::vector<ActionSegment> segments_from_json(const std::string& text);

}  // namespace rehab::segment
