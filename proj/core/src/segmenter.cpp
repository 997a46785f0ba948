#include "rehab/segmenter.hpp"

#include "rehab/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <deque>
#include <map>
#include <set>

namespace rehab::segment {

using dataset::is_action;
using dataset::kNoAction;
using nlohmann::json;

namespace {

constexpr std::int64_t kLastSampleOffset =
    dataset::kSampleStep * static_cast<std::int64_t>(dataset::kFramesPerSample - 1);

struct Run {
  LabelId label;
  std::int64_t start;
  std::int64_t end;  // inclusive
  std::int64_t length() const { return end - start + 1; }
};

std::vector<Run> runs_of(std::span<const LabelId> labels) {
  std::vector<Run> runs;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(labels.size()); ++i) {
    if (!runs.empty() && runs.back().label == labels[i]) {
      runs.back().end = i;
    } else {
      runs.push_back({labels[i], i, i});
    }
  }
  return runs;
}

// Replaces a label only when another label holds a strict majority of the
// window; windows are truncated at the sequence edges.
std::vector<LabelId> majority_filter(std::span<const LabelId> labels, int width) {
  const auto n = static_cast<std::int64_t>(labels.size());
  const std::int64_t half = width / 2;
  std::vector<LabelId> out(labels.begin(), labels.end());
  std::map<LabelId, int> counts;
  for (std::int64_t i = 0; i < n; ++i) {
    counts.clear();
    const std::int64_t lo = std::max<std::int64_t>(0, i - half);
    const std::int64_t hi = std::min<std::int64_t>(n - 1, i + half);
    for (std::int64_t k = lo; k <= hi; ++k) ++counts[labels[k]];
    const std::int64_t span = hi - lo + 1;
    for (const auto& [label, c] : counts) {
      if (2 * c > span) {
        out[i] = label;
        break;
      }
    }
  }
  return out;
}

// One smoothing pass: filter, then relabel action runs that are too short.
std::vector<LabelId> smoothing_pass(std::span<const LabelId> labels, const SegmentOptions& opt) {
  const std::vector<LabelId> filtered = majority_filter(labels, opt.smoothing_width);
  const std::vector<Run> runs = runs_of(filtered);
  std::vector<LabelId> out(filtered.size());
  for (std::size_t r = 0; r < runs.size(); ++r) {
    LabelId label = runs[r].label;
    if (is_action(label) && runs[r].length() < opt.min_segment_frames) {
      const bool flanked = r > 0 && r + 1 < runs.size() && runs[r - 1].label == runs[r + 1].label;
      label = flanked ? runs[r - 1].label : kNoAction;
    }
    std::fill(out.begin() + runs[r].start, out.begin() + runs[r].end + 1, label);
  }
  return out;
}

}  // namespace

std::vector<WindowPrediction> predict_windows(media::VideoSource& video, std::span<const pose::RawPoseFrame> pose_frames,
                                              const pose::KeypointLayout& layout, WindowClassifier& classifier,
                                              const PredictOptions& options) {
  const media::VideoInfo info = video.info();
  if (pose_frames.empty()) {
    throw DependencyError("no pose stream available for video; keypoints are required for recognition");
  }
  const std::vector<std::int64_t> starts = dataset::extract_windows(info.frame_count);
  std::vector<WindowPrediction> predictions;
  if (starts.empty()) return predictions;

  const auto dense = pose::densify(pose_frames, info.frame_count);
  const pose::SequenceFeatures features = pose::sequence_features(dense, layout);

  std::set<std::int64_t> needed;
  for (auto s : starts) {
    for (auto idx : dataset::sample_indices(s)) needed.insert(idx);
  }
  const media::ResizeTo size = classifier.input_size();
  const std::size_t batch_size = std::max<std::size_t>(1, options.batch_size);

  std::map<std::int64_t, media::Image> buffered;
  std::vector<WindowInput> batch;
  std::size_t next_window = 0;

  auto flush = [&] {
    if (batch.empty()) return;
    const auto probs = classifier.predict_proba(batch);
    if (probs.size() != batch.size()) throw Error(ErrorCode::internal, "classifier returned wrong batch size");
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& p = probs[i];
      if (p.size() != static_cast<std::size_t>(dataset::kNumClasses)) {
        throw Error(ErrorCode::internal, "classifier must return " + std::to_string(dataset::kNumClasses) +
                                             " probabilities per window");
      }
      WindowPrediction wp;
      wp.start_frame = batch[i].start_frame;
      wp.label = static_cast<LabelId>(std::max_element(p.begin(), p.end()) - p.begin());
      wp.confidence = p[static_cast<std::size_t>(wp.label)];
      wp.probabilities = p;
      predictions.push_back(std::move(wp));
    }
    batch.clear();
  };

  const std::int64_t last_needed = *needed.rbegin();
  video.scan(0, last_needed, [&](std::int64_t idx, const media::Image& img) {
    if (needed.contains(idx)) buffered.emplace(idx, media::resize(img, size));
    while (next_window < starts.size() &&
           starts[next_window] + kLastSampleOffset <= idx) {
      const std::int64_t s = starts[next_window];
      WindowInput in;
      in.start_frame = s;
      const auto sampled = dataset::sample_indices(s);
      in.skeleton.resize(static_cast<Eigen::Index>(sampled.size()), static_cast<Eigen::Index>(pose::kFeatureDim));
      for (std::size_t k = 0; k < sampled.size(); ++k) {
        in.frames.push_back(buffered.at(sampled[k]));
        in.skeleton.row(static_cast<Eigen::Index>(k)) = features.values.row(sampled[k]);
      }
      batch.push_back(std::move(in));
      ++next_window;
      if (batch.size() >= batch_size) flush();
      const std::int64_t keep_from = next_window < starts.size() ? starts[next_window] : idx + 1;
      buffered.erase(buffered.begin(), buffered.lower_bound(keep_from));
    }
  });
  flush();
  return predictions;
}

std::vector<LabelId> frame_labels(std::span<const WindowPrediction> predictions, std::int64_t frame_count) {
  std::vector<LabelId> labels(static_cast<std::size_t>(std::max<std::int64_t>(0, frame_count)), kNoAction);
  if (predictions.empty()) return labels;

  std::vector<std::size_t> order(predictions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[a].start_frame < predictions[b].start_frame;
  });

  const std::int64_t span = dataset::kWindowFrames;
  std::map<LabelId, std::pair<int, std::size_t>> votes;  // label -> (count, earliest rank)
  for (std::int64_t f = 0; f < frame_count; ++f) {
    votes.clear();
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      const auto& w = predictions[order[rank]];
      if (w.start_frame > f) break;
      if (f <= w.start_frame + span - 1) {
        auto [it, inserted] = votes.try_emplace(w.label, 0, rank);
        ++it->second.first;
      }
    }
    if (votes.empty()) {
      std::int64_t best_dist = -1;
      LabelId best = kNoAction;
      for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const auto& w = predictions[order[rank]];
        const std::int64_t end = w.start_frame + span - 1;
        const std::int64_t dist = f < w.start_frame ? w.start_frame - f : f - end;
        if (best_dist < 0 || dist < best_dist) {
          best_dist = dist;
          best = w.label;
        }
      }
      labels[static_cast<std::size_t>(f)] = best;
      continue;
    }
    int top = 0;
    for (const auto& [_, v] : votes) top = std::max(top, v.first);
    std::optional<std::pair<LabelId, std::size_t>> pick;
    for (const auto& [label, v] : votes) {
      if (v.first != top) continue;
      if (!pick) {
        pick = {label, v.second};
        continue;
      }
      const bool cur_action = is_action(pick->first);
      const bool cand_action = is_action(label);
      if (cand_action != cur_action) {
        if (cand_action) pick = {label, v.second};
      } else if (v.second < pick->second) {
        pick = {label, v.second};
      }
    }
    labels[static_cast<std::size_t>(f)] = pick->first;
  }
  return labels;
}

std::vector<ActionSegment> smooth_and_segment(std::span<const LabelId> labels, const SegmentOptions& options) {
  if (options.smoothing_width < 1 || options.smoothing_width % 2 == 0) {
    throw ValidationError("smoothing_width", "must be a positive odd number");
  }
  if (options.min_segment_frames < 1) throw ValidationError("min_segment_frames", "must be >= 1");

  std::vector<LabelId> current(labels.begin(), labels.end());
  constexpr int kMaxPasses = 64;
  bool stable = false;
  for (int pass = 0; pass < kMaxPasses && !stable; ++pass) {
    std::vector<LabelId> next = smoothing_pass(current, options);
    stable = next == current;
    current = std::move(next);
  }

  std::vector<ActionSegment> segments;
  for (const Run& r : runs_of(current)) {
    if (!is_action(r.label) || r.length() < options.min_segment_frames) continue;
    ActionSegment s;
    s.label = r.label;
    s.start_frame = r.start;
    s.end_frame = r.end;
    segments.push_back(s);
  }
  return segments;
}

std::vector<LabelId> render_labels(std::span<const ActionSegment> segments, std::int64_t frame_count) {
  std::vector<LabelId> labels(static_cast<std::size_t>(std::max<std::int64_t>(0, frame_count)), kNoAction);
  for (const auto& s : segments) {
    for (std::int64_t f = std::max<std::int64_t>(0, s.start_frame); f <= std::min(s.end_frame, frame_count - 1); ++f) {
      labels[static_cast<std::size_t>(f)] = s.label;
    }
  }
  return labels;
}

void attach_confidence(std::vector<ActionSegment>& segments, std::span<const WindowPrediction> predictions) {
  for (auto& s : segments) {
    double sum = 0.0;
    int n = 0;
    for (const auto& w : predictions) {
      const std::int64_t w_end = w.start_frame + dataset::kWindowFrames - 1;
      if (w.label == s.label && w.start_frame <= s.end_frame && w_end >= s.start_frame) {
        sum += w.confidence;
        ++n;
      }
    }
    s.mean_confidence = n > 0 ? sum / n : 0.0;
    s.needs_review = s.mean_confidence < kLowConfidenceThreshold;
  }
}

std::vector<ActionSegment> segment_video(const std::string& video_id, std::span<const WindowPrediction> predictions,
                                         std::int64_t frame_count, const SegmentOptions& options) {
  const auto labels = frame_labels(predictions, frame_count);
  auto segments = smooth_and_segment(labels, options);
  attach_confidence(segments, predictions);
  for (std::size_t k = 0; k < segments.size(); ++k) {
    segments[k].video_id = video_id;
    segments[k].segment_id = video_id + "-seg" + std::to_string(k);
  }
  return segments;
}

void extract_subclips(media::VideoSource& video, std::vector<ActionSegment>& segments,
                      const std::filesystem::path& out_dir) {
  for (auto& s : segments) {
    const auto path = out_dir / (s.segment_id + ".avi");
    try {
      const auto written = media::write_clip(path, video, s.start_frame, s.end_frame);
      if (written != s.frame_count()) {
        throw MediaError("wrote " + std::to_string(written) + " of " + std::to_string(s.frame_count()) + " frames");
      }
    } catch (const MediaError& e) {
      throw MediaError("segment " + s.segment_id + ": " + e.what());
    }
    s.subclip_uri = path.string();
  }
}

std::string segments_to_json(std::span<const ActionSegment> segments) {
  json arr = json::array();
  for (const auto& s : segments) {
    arr.push_back({{"segment_id", s.segment_id},
                   {"video_id", s.video_id},
                   {"label", s.label},
                   {"start_frame", s.start_frame},
                   {"end_frame", s.end_frame},
                   {"mean_confidence", s.mean_confidence},
                   {"needs_review", s.needs_review},
                   {"subclip_uri", s.subclip_uri}});
  }
  return arr.dump(2);
}

std::vector<ActionSegment> segments_from_json(const std::string& text) {
  std::vector<ActionSegment> out;
  try {
    for (const auto& j : json::parse(text)) {
      ActionSegment s;
      s.segment_id = j.at("segment_id").get<std::string>();
      s.video_id = j.at("video_id").get<std::string>();
      s.label = j.at("label").get<LabelId>();
      s.start_frame = j.at("start_frame").get<std::int64_t>();
      s.end_frame = j.at("end_frame").get<std::int64_t>();
      s.mean_confidence = j.value("mean_confidence", 0.0);
      s.needs_review = j.value("needs_review", s.mean_confidence < kLowConfidenceThreshold);
      s.subclip_uri = j.value("subclip_uri", "");
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ValidationError("segments", e.what());
  }
  return out;
}

}  // namespace rehab::segment
