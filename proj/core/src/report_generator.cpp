#include "rehab/report_generator.hpp"

#include "rehab/error.hpp"
#include "rehab/prompts.hpp"
#include "rehab/tokenizer.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <future>

namespace rehab::report {

using nlohmann::json;

std::size_t chunk_count(double duration_seconds) {
  if (!(duration_seconds > 0.0)) return 0;
  return static_cast<std::size_t>(std::ceil(duration_seconds / kChunkSeconds - 1e-12));
}

std::vector<ChunkPlan> plan_chunks(const media::VideoInfo& info) {
  if (info.frame_count <= 0 || !(info.fps > 0.0)) return {};
  const double duration = info.duration_seconds();
  std::vector<ChunkPlan> chunks(chunk_count(duration));
  for (std::int64_t t = 0; static_cast<double>(t) < duration; ++t) {
    const auto c = static_cast<std::size_t>(static_cast<double>(t) / kChunkSeconds);
    if (c >= chunks.size()) break;
    const auto frame = std::min<std::int64_t>(info.frame_count - 1, std::llround(static_cast<double>(t) * info.fps));
    chunks[c].frame_indices.push_back(frame);
  }
  for (std::size_t c = 0; c < chunks.size(); ++c) chunks[c].chunk_index = c;
  return chunks;
}

std::vector<std::size_t> thin_uniform(std::size_t n, std::size_t cap) {
  std::vector<std::size_t> out;
  if (n == 0 || cap == 0) return out;
  if (n <= cap) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(i);
    return out;
  }
  if (cap == 1) return {n / 2};
  for (std::size_t i = 0; i < cap; ++i) {
    out.push_back(static_cast<std::size_t>(std::llround(static_cast<double>(i) * static_cast<double>(n - 1) /
                                                        static_cast<double>(cap - 1))));
  }
  return out;
}

std::vector<VideoChunkFrames> chunk_subvideo(const std::string& segment_id, media::VideoSource& clip,
                                             std::size_t frame_cap) {
  const auto info = clip.info();
  if (info.frame_count <= 0) throw MediaError("sub-clip for " + segment_id + " has no frames");
  if (!(info.fps > 0.0)) throw MediaError("sub-clip for " + segment_id + " has no frame rate");
  std::vector<VideoChunkFrames> out;
  for (const auto& plan : plan_chunks(info)) {
    VideoChunkFrames chunk{segment_id, plan.chunk_index, {}, {}};
    for (auto pos : thin_uniform(plan.frame_indices.size(), frame_cap)) {
      chunk.frame_indices.push_back(plan.frame_indices[pos]);
    }
    auto decoded = clip.read_frames(chunk.frame_indices);
    for (auto idx : chunk.frame_indices) chunk.frames.push_back(decoded.at(idx));
    out.push_back(std::move(chunk));
  }
  return out;
}

namespace {

const text::WordTokenizer& tokenizer() {
  static const text::WordTokenizer tok;
  return tok;
}

// Sends one request and books it against `acct`.
std::string call(const ReportContext& ctx, llm::LlmRequest request, Accounting& acct) {
  try {
    auto outcome = llm::call_with_retry(*ctx.client, request, ctx.retry, ctx.transcript);
    acct.llm_calls += 1;
    acct.failed_attempts += static_cast<std::uint64_t>(outcome.attempts - 1);
    acct.prompt_tokens += tokenizer().count(request.prompt);
    acct.completion_tokens += tokenizer().count(outcome.text);
    acct.frames_sent += request.frames.size();
    acct.llm_latency_ms += outcome.latency_ms;
    return std::move(outcome.text);
  } catch (const llm::RetriesExhausted& e) {
    acct.failed_attempts += static_cast<std::uint64_t>(e.attempts());
    throw;
  } catch (const llm::ProviderError&) {
    acct.failed_attempts += 1;
    throw;
  }
}

prompts::Bindings action_bindings(const ClassDescription& cls) {
  return {{"action_id", std::to_string(cls.class_id)}, {"action_desc", cls.description}};
}

std::string join_chunk_evaluations(const std::vector<std::string>& evals) {
  std::string out;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    if (i) out += "\n\n";
    out += "## Segment " + std::to_string(i + 1) + "\n" + evals[i];
  }
  return out;
}

std::string join_action_reports(std::span<const ActionReport> reports) {
  std::string out;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    if (i) out += "\n\n";
    out += "## Action " + std::to_string(r.action_id) + " (" + r.action_name + ")\n";
    out += r.failed ? "Evaluation unavailable: " + r.failure_reason : r.text;
  }
  return out;
}

}  // namespace

ActionReport evaluate_action(const segment::ActionSegment& segment, media::VideoSource& clip,
                             const ReportContext& ctx) {
  if (!ctx.catalog || !ctx.client) throw ConfigError("report context needs a class catalog and an llm client");
  const auto& cls = ctx.catalog->at(segment.label);
  ActionReport report;
  report.segment_id = segment.segment_id;
  report.action_id = segment.label;
  report.action_name = cls.name;
  report.start_frame = segment.start_frame;
  report.end_frame = segment.end_frame;

  const std::string knowledge = ctx.knowledge ? ctx.knowledge->for_action(segment.label).concatenated_text : "";
  const auto bindings = action_bindings(cls);

  try {
    auto chunks = chunk_subvideo(segment.segment_id, clip, ctx.client->max_frames());
    report.chunk_count = chunks.size();
    if (chunks.size() == 1) {
      report.text = call(ctx,
                         {std::string(prompts::kSingleAction),
                          prompts::render_with_knowledge(prompts::get(prompts::kSingleAction), bindings, knowledge),
                          std::move(chunks[0].frames)},
                         report.accounting);
      return report;
    }
    const std::string chunk_prompt =
        prompts::render_with_knowledge(prompts::get(prompts::kChunkEvaluation), bindings, knowledge);
    for (auto& chunk : chunks) {
      report.chunk_evaluations.push_back(
          call(ctx, {std::string(prompts::kChunkEvaluation), chunk_prompt, std::move(chunk.frames)},
               report.accounting));
    }
    auto synth_bindings = bindings;
    synth_bindings["chunk_evaluations"] = join_chunk_evaluations(report.chunk_evaluations);
    report.text = call(ctx,
                       {std::string(prompts::kActionSynthesis),
                        prompts::render(prompts::get(prompts::kActionSynthesis), synth_bindings),
                        {}},
                       report.accounting);
  } catch (const MediaError& e) {
    report.failed = true;
    report.failure_reason = e.what();
  } catch (const llm::RetriesExhausted& e) {
    report.failed = true;
    report.failure_reason = e.what();
  } catch (const llm::ProviderError& e) {
    report.failed = true;
    report.failure_reason = e.what();
  }
  if (report.failed) spdlog::warn("action evaluation for {} failed: {}", segment.segment_id, report.failure_reason);
  return report;
}

std::string synthesize_final(std::span<const ActionReport> reports, const ReportContext& ctx) {
  if (reports.empty()) throw ValidationError("reports", "final synthesis needs at least one action report");
  Accounting scratch;
  return call(ctx,
              {std::string(prompts::kFinalSynthesis),
               prompts::render(prompts::get(prompts::kFinalSynthesis), {{"all_evaluations", join_action_reports(reports)}}),
               {}},
              scratch);
}

namespace {

void add(Accounting& into, const Accounting& a) {
  into.llm_calls += a.llm_calls;
  into.failed_attempts += a.failed_attempts;
  into.prompt_tokens += a.prompt_tokens;
  into.completion_tokens += a.completion_tokens;
  into.frames_sent += a.frames_sent;
  into.llm_latency_ms += a.llm_latency_ms;
}

ActionReport evaluate_one(const segment::ActionSegment& seg, const SessionInput& session, const ReportContext& ctx) {
  std::unique_ptr<media::VideoSource> clip;
  try {
    clip = session.open_clip(seg);
  } catch (const MediaError& e) {
    ActionReport r;
    r.segment_id = seg.segment_id;
    r.action_id = seg.label;
    r.action_name = ctx.catalog->at(seg.label).name;
    r.start_frame = seg.start_frame;
    r.end_frame = seg.end_frame;
    r.failed = true;
    r.failure_reason = e.what();
    return r;
  }
  return evaluate_action(seg, *clip, ctx);
}

}  // namespace

AssessmentReport generate_report(const SessionInput& session, const ReportContext& ctx,
                                 const ReportOptions& options) {
  if (!ctx.catalog || !ctx.client) throw ConfigError("report context needs a class catalog and an llm client");
  const auto t0 = std::chrono::steady_clock::now();
  AssessmentReport report;
  report.session_id = session.session_id;
  report.model_fingerprint = ctx.client->fingerprint();
  if (ctx.knowledge) report.knowledge_version = std::to_string(ctx.knowledge->cache().version);

  if (session.segments.empty()) {
    report.final_summary = std::string(kNoSegmentsSummary);
    return report;
  }
  if (!session.open_clip) throw ConfigError("session " + session.session_id + " has no clip opener");

  report.actions.resize(session.segments.size());
  const std::size_t width = std::max<std::size_t>(1, options.parallel_actions);
  for (std::size_t begin = 0; begin < session.segments.size(); begin += width) {
    const std::size_t end = std::min(session.segments.size(), begin + width);
    if (width == 1) {
      report.actions[begin] = evaluate_one(session.segments[begin], session, ctx);
      continue;
    }
    std::vector<std::future<ActionReport>> futures;
    for (std::size_t i = begin; i < end; ++i) {
      futures.push_back(std::async(std::launch::async,
                                   [&, i] { return evaluate_one(session.segments[i], session, ctx); }));
    }
    for (std::size_t i = begin; i < end; ++i) report.actions[i] = futures[i - begin].get();
  }
  for (const auto& a : report.actions) add(report.accounting, a.accounting);

  Accounting final_acct;
  try {
    report.final_summary = call(ctx,
                                {std::string(prompts::kFinalSynthesis),
                                 prompts::render(prompts::get(prompts::kFinalSynthesis),
                                                 {{"all_evaluations", join_action_reports(report.actions)}}),
                                 {}},
                                final_acct);
  } catch (const llm::ProviderError& e) {
    report.final_failed = true;
    report.final_summary = std::string("Final summary unavailable: ") + e.what();
  } catch (const llm::RetriesExhausted& e) {
    report.final_failed = true;
    report.final_summary = std::string("Final summary unavailable: ") + e.what();
  }
  add(report.accounting, final_acct);
  report.accounting.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

namespace {

json accounting_json(const Accounting& a) {
  return {{"llm_calls", a.llm_calls},         {"failed_attempts", a.failed_attempts},
          {"prompt_tokens", a.prompt_tokens}, {"completion_tokens", a.completion_tokens},
          {"frames_sent", a.frames_sent},     {"llm_latency_ms", a.llm_latency_ms},
          {"wall_ms", a.wall_ms}};
}

Accounting accounting_from(const json& j) {
  Accounting a;
  a.llm_calls = j.value("llm_calls", std::uint64_t{0});
  a.failed_attempts = j.value("failed_attempts", std::uint64_t{0});
  a.prompt_tokens = j.value("prompt_tokens", std::uint64_t{0});
  a.completion_tokens = j.value("completion_tokens", std::uint64_t{0});
  a.frames_sent = j.value("frames_sent", std::uint64_t{0});
  a.llm_latency_ms = j.value("llm_latency_ms", 0.0);
  a.wall_ms = j.value("wall_ms", 0.0);
  return a;
}

}  // namespace

std::string report_to_json(const AssessmentReport& report) {
  json actions = json::array();
  for (const auto& a : report.actions) {
    actions.push_back({{"segment_id", a.segment_id},
                       {"action_id", a.action_id},
                       {"action_name", a.action_name},
                       {"start_frame", a.start_frame},
                       {"end_frame", a.end_frame},
                       {"chunk_count", a.chunk_count},
                       {"chunk_evaluations", a.chunk_evaluations},
                       {"text", a.text},
                       {"failed", a.failed},
                       {"failure_reason", a.failure_reason},
                       {"accounting", accounting_json(a.accounting)}});
  }
  return json{{"session_id", report.session_id},
              {"actions", actions},
              {"final_summary", report.final_summary},
              {"final_failed", report.final_failed},
              {"model_fingerprint", report.model_fingerprint},
              {"knowledge_version", report.knowledge_version},
              {"accounting", accounting_json(report.accounting)}}
      .dump(2);
}

AssessmentReport report_from_json(const std::string& text) {
  AssessmentReport r;
  try {
    const json j = json::parse(text);
    r.session_id = j.at("session_id").get<std::string>();
    for (const auto& a : j.at("actions")) {
      ActionReport ar;
      ar.segment_id = a.at("segment_id").get<std::string>();
      ar.action_id = a.at("action_id").get<int>();
      ar.action_name = a.value("action_name", std::string{});
      ar.start_frame = a.value("start_frame", std::int64_t{0});
      ar.end_frame = a.value("end_frame", std::int64_t{0});
      ar.chunk_count = a.value("chunk_count", std::size_t{0});
      ar.chunk_evaluations = a.value("chunk_evaluations", std::vector<std::string>{});
      ar.text = a.value("text", std::string{});
      ar.failed = a.value("failed", false);
      ar.failure_reason = a.value("failure_reason", std::string{});
      if (a.contains("accounting")) ar.accounting = accounting_from(a["accounting"]);
      r.actions.push_back(std::move(ar));
    }
    r.final_summary = j.at("final_summary").get<std::string>();
    r.final_failed = j.value("final_failed", false);
    r.model_fingerprint = j.value("model_fingerprint", std::string{});
    r.knowledge_version = j.value("knowledge_version", std::string{});
    if (j.contains("accounting")) r.accounting = accounting_from(j["accounting"]);
  } catch (const json::exception& e) {
    throw ValidationError("report", e.what());
  }
  return r;
}

}  // namespace rehab::report
