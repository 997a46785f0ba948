#pragma once

#include "rehab/catalog.hpp"
#include "rehab/knowledge_retrieval.hpp"
#include "rehab/llm_client.hpp"
#include "rehab/media.hpp"
#include "rehab/segmenter.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rehab::report {

inline constexpr double kChunkSeconds = 45.0;

/// ceil(duration / 45); zero for an empty clip.
std::size_t chunk_count(double duration_seconds);

/// Which frames of a sub-clip a chunk carries: one per second of its 45 s span.
struct ChunkPlan {
  std::size_t chunk_index = 0;
  std::vector<std::int64_t> frame_indices;
};

/// 1 fps samples at t = 0, 1, 2, ... s grouped by 45 s span.
std::vector<ChunkPlan> plan_chunks(const media::VideoInfo& info);

/// `cap` positions spread evenly over [0, n), including both ends.
std::vector<std::size_t> thin_uniform(std::size_t n, std::size_t cap);

struct VideoChunkFrames {
  std::string segment_id;
  std::size_t chunk_index = 0;
  std::vector<std::int64_t> frame_indices;
  std::vector<media::Image> frames;
};

/// Decodes the chunk frames of a sub-clip, thinning each chunk to
/// `frame_cap`. MediaError for an unreadable or empty clip.
std::vector<VideoChunkFrames> chunk_subvideo(const std::string& segment_id, media::VideoSource& clip,
                                             std::size_t frame_cap);

struct Accounting {
  std::uint64_t llm_calls = 0;       // successful provider calls
  std::uint64_t failed_attempts = 0;
  std::uint64_t prompt_tokens = 0;   // word-tokenizer counts, not provider tokens
  std::uint64_t completion_tokens = 0;
  std::uint64_t frames_sent = 0;
  double llm_latency_ms = 0.0;
  double wall_ms = 0.0;
};

struct ActionReport {
  std::string segment_id;
  dataset::LabelId action_id = 0;
  std::string action_name;
  std::int64_t start_frame = 0;
  std::int64_t end_frame = 0;
  std::size_t chunk_count = 0;
  std::vector<std::string> chunk_evaluations;
  std::string text;  // the action-level assessment
  bool failed = false;
  std::string failure_reason;
  Accounting accounting;
};

struct AssessmentReport {
  std::string session_id;
  std::vector<ActionReport> actions;
  std::string final_summary;
  bool final_failed = false;
  std::string model_fingerprint;
  std::string knowledge_version;
  Accounting accounting;
};

std::string report_to_json(const AssessmentReport& report);
AssessmentReport report_from_json(const std::string& text);

/// Everything the orchestration needs besides the session itself.
struct ReportContext {
  const ClassCatalog* catalog = nullptr;
  const knowledge::KnowledgeBase* knowledge = nullptr;
  llm::LlmClient* client = nullptr;
  llm::RetryPolicy retry;
  llm::Transcript* transcript = nullptr;  // optional
};

/// Single-action prompt for one-chunk clips, otherwise one chunk prompt per
/// chunk and a synthesis prompt over their outputs. Provider failures and
/// unreadable clips mark the report failed instead of throwing.
ActionReport evaluate_action(const segment::ActionSegment& segment, media::VideoSource& clip,
                             const ReportContext& ctx);

/// One final-synthesis call over all action reports. ValidationError when
/// `reports` is empty.
std::string synthesize_final(std::span<const ActionReport> reports, const ReportContext& ctx);

using ClipOpener = std::function<std::unique_ptr<media::VideoSource>(const segment::ActionSegment&)>;

struct SessionInput {
  std::string session_id;
  std::vector<segment::ActionSegment> segments;
  ClipOpener open_clip;
};

struct ReportOptions {
  /// Actions evaluated concurrently; 1 keeps calls strictly ordered.
  std::size_t parallel_actions = 1;
};

/// Evaluates every segment, then writes the final summary. A session with no
/// segments yields a stub summary and makes no calls.
AssessmentReport generate_report(const SessionInput& session, const ReportContext& ctx,
                                 const ReportOptions& options = {});

/// Text placed in the final summary when a session has no segments.
inline constexpr std::string_view kNoSegmentsSummary =
    "No exercise segments were recognized in this session, so no per-action assessment was produced. "
    "Please check that the whole upper body stays in frame and record the session again.";

}  // namespace rehab::report
