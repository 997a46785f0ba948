#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rehab::dataset {

using LabelId = int;

inline constexpr LabelId kNoAction = 0;
inline constexpr int kNumActions = 15;
inline constexpr int kNumClasses = kNumActions + 1;  // 15 exercises + "no action"

inline constexpr std::int64_t kWindowFrames = 60;
inline constexpr std::int64_t kWindowStride = 21;
inline constexpr std::int64_t kSampleStep = 6;
inline constexpr std::size_t kFramesPerSample = 10;

inline constexpr int kManifestVersion = 1;

constexpr bool is_action(LabelId label) noexcept { return label >= 1 && label <= kNumActions; }
constexpr bool is_valid_label(LabelId label) noexcept { return label >= 0 && label < kNumClasses; }

struct LabelSpan {
  std::int64_t start_frame = 0;
  std::int64_t end_frame = 0;  // inclusive
  LabelId label = kNoAction;
};

struct TimelineAnnotation {
  std::string video_id;
  double fps = 30.0;
  std::vector<LabelSpan> spans;

  /// Label of the covering span; frames outside every span are "no action".
  LabelId label_at(std::int64_t frame) const;
};

/// Rejects unsorted/overlapping spans (listing the offenders) and labels
/// outside 0..15.
void validate(const TimelineAnnotation& annotation);

enum class Split { train, val, test };
std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct WindowSample {
  std::string video_id;
  std::int64_t start_frame = 0;
  std::array<std::int64_t, kFramesPerSample> sampled_frame_indices{};
  std::array<LabelId, kFramesPerSample> per_frame_labels{};
  LabelId window_label = kNoAction;
  Split split = Split::train;
};

/// Window starts {0, 21, 42, ...} with start + 59 <= frame_count - 1.
std::vector<std::int64_t> extract_windows(std::int64_t frame_count);

/// Sampled frame indices start, start + 6, ..., start + 54.
std::array<std::int64_t, kFramesPerSample> sample_indices(std::int64_t start_frame);

/// Most frequent label. Ties between an action and "no action" go to the
/// action; ties between actions go to the one seen first in the window.
LabelId resolve_window_label(std::span<const LabelId> per_frame_labels);

struct VideoEntry {
  std::string video_id;
  std::int64_t frame_count = 0;
  TimelineAnnotation annotation;
};

/// Either an explicit per-video assignment, or the ordered rule: the first
/// `train_count` videos (input order) train, the rest are shuffled with
/// `seed` and split equally into validation and test (extra video to val).
struct SplitConfig {
  std::uint64_t seed = 0;
  std::map<Split, std::vector<std::string>> explicit_assignment;
  std::optional<std::size_t> train_count;
};

SplitConfig parse_split_config(const std::string& json_text);

struct SplitStats {
  std::size_t sample_count = 0;
  std::array<std::size_t, kNumClasses> label_histogram{};
};

struct DatasetManifest {
  int version = kManifestVersion;
  std::uint64_t seed = 0;
  std::map<std::string, Split> video_splits;  // ordered by video id
  std::map<Split, SplitStats> splits;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<WindowSample> samples;  // grouped by video in input order, windows ascending
};

Dataset build_dataset(std::span<const VideoEntry> videos, const SplitConfig& split);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

std::string sample_to_json(const WindowSample& sample);
WindowSample sample_from_json(const std::string& line);

/// Writes `manifest.json` and `samples/<video_id>.jsonl` under `dir`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

/// Annotation file: {"video_id", "fps", "frame_count", "spans": [{"start_frame",
/// "end_frame", "label"}]}; spans may instead use seconds via "start"/"end",
/// as exported by timeline labelling tools.
VideoEntry parse_annotation(const std::string& json_text);
VideoEntry load_annotation(const std::filesystem::path& path);

}  // namespace rehab::dataset
