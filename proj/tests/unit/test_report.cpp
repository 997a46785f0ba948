#include "rehab/error.hpp"
#include "rehab/llm_client.hpp"
#include "rehab/prompts.hpp"
#include "rehab/report_generator.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

using namespace rehab;
using namespace rehab::report;

namespace {

constexpr double kFps = 30.0;

media::GeneratedVideo clip_of_seconds(double seconds, dataset::LabelId label = 1) {
  media::VideoInfo info{static_cast<std::int64_t>(std::llround(seconds * kFps)), kFps, 8, 8};
  return media::GeneratedVideo(info, [label](std::int64_t f) {
    return media::Image::solid(8, 8, static_cast<std::uint8_t>(16 * label), static_cast<std::uint8_t>(f % 256), 0);
  });
}

segment::ActionSegment seg(const std::string& id, dataset::LabelId label, double seconds) {
  segment::ActionSegment s;
  s.segment_id = id;
  s.video_id = "v";
  s.label = label;
  s.start_frame = 0;
  s.end_frame = static_cast<std::int64_t>(std::llround(seconds * kFps)) - 1;
  return s;
}

std::size_t expected_calls(const std::vector<std::size_t>& chunk_counts) {
  std::size_t n = 1;
  for (auto c : chunk_counts) n += c == 1 ? 1 : c + 1;
  return n;
}

struct Harness {
  ClassCatalog catalog = testing::fixture_catalog();
  std::unique_ptr<llm::MockLlmClient> client = llm::MockLlmClient::echo(64);
  llm::Transcript transcript;
  ReportContext ctx() {
    ReportContext c;
    c.catalog = &catalog;
    c.client = client.get();
    c.transcript = &transcript;
    c.retry.sleep = [](std::chrono::milliseconds) {};
    return c;
  }
};

SessionInput session_with(std::vector<segment::ActionSegment> segs) {
  SessionInput in;
  in.session_id = "s1";
  in.segments = std::move(segs);
  in.open_clip = [](const segment::ActionSegment& s) -> std::unique_ptr<media::VideoSource> {
    return std::make_unique<media::GeneratedVideo>(clip_of_seconds(static_cast<double>(s.frame_count()) / kFps, s.label));
  };
  return in;
}

}  // namespace

TEST_CASE("placeholders and rendering") {
  CHECK(prompts::find_placeholders("a {x} b {y_1} {x} {1bad} {}") == std::set<std::string, std::less<>>{"x", "y_1"});
  const auto t = prompts::make_template("t", "Hello {name}, {name}!");
  CHECK(prompts::render(t, {{"name", "{name}"}}) == "Hello {name}, {name}!");
  CHECK_THROWS_AS(prompts::render(t, {}), ValidationError);
  CHECK_THROWS_AS(prompts::render(t, {{"name", "x"}, {"extra", "y"}}), ValidationError);
  CHECK_THROWS_AS(prompts::get("nope"), ConfigError);
}

TEST_CASE("built-in templates carry their placeholders") {
  CHECK(prompts::get(prompts::kSingleAction).placeholders ==
        std::set<std::string, std::less<>>{"action_desc", "action_id"});
  CHECK(prompts::get(prompts::kChunkEvaluation).placeholders ==
        std::set<std::string, std::less<>>{"action_desc", "action_id"});
  CHECK(prompts::get(prompts::kActionSynthesis).placeholders ==
        std::set<std::string, std::less<>>{"action_desc", "action_id", "chunk_evaluations"});
  CHECK(prompts::get(prompts::kFinalSynthesis).placeholders == std::set<std::string, std::less<>>{"all_evaluations"});
  CHECK(prompts::get(prompts::kZeroShot).placeholders.contains("class_list_str"));
  CHECK(prompts::template_ids().size() == 7);

  const auto& single = prompts::get(prompts::kSingleAction);
  const prompts::Bindings b = {{"action_id", "3"}, {"action_desc", "desc"}};
  CHECK(prompts::render_with_knowledge(single, b, "") == prompts::render(single, b));
  const auto with = prompts::render_with_knowledge(single, b, "KNOWLEDGE BODY");
  CHECK(with.find("KNOWLEDGE BODY") != std::string::npos);
  CHECK(prompts::find_placeholders(with).empty());
}

TEST_CASE("chunk counts follow ceil(duration / 45)") {
  CHECK(chunk_count(30) == 1);
  CHECK(chunk_count(45) == 1);
  CHECK(chunk_count(45.5) == 2);
  CHECK(chunk_count(600) == 14);
  CHECK(chunk_count(0) == 0);
  for (int d = 1; d <= 3600; ++d) {
    REQUIRE(chunk_count(d) == static_cast<std::size_t>((d + 44) / 45));
  }
}

TEST_CASE("chunk plans sample one frame per second") {
  const auto plans = plan_chunks({600 * 30, 30.0, 8, 8});
  REQUIRE(plans.size() == 14);
  CHECK(plans.back().frame_indices.size() == 15);
  CHECK(plans.front().frame_indices.size() == 45);
  CHECK(plans[1].frame_indices.front() == 45 * 30);
  CHECK(plan_chunks({30 * 30, 30.0, 8, 8}).at(0).frame_indices.size() == 30);
  CHECK(plan_chunks({45 * 30, 30.0, 8, 8}).size() == 1);

  CHECK(thin_uniform(45, 8) == std::vector<std::size_t>{0, 6, 13, 19, 25, 31, 38, 44});
  CHECK(thin_uniform(5, 8).size() == 5);
}

TEST_CASE("mock clients are pure and the frame cap is checked before sending") {
  auto echo = llm::MockLlmClient::echo(4);
  CHECK(echo->send({"t", "x", {}}) == echo->send({"t", "x", {}}));
  auto hashed = llm::MockLlmClient::hashed();
  CHECK(hashed->send({"t", "x", {}}) == hashed->send({"t", "x", {}}));
  CHECK(hashed->send({"t", "x", {}}) != hashed->send({"t", "y", {}}));

  int invoked = 0;
  llm::MockLlmClient capped("capped", [&](const llm::LlmRequest&) { ++invoked; return std::string("ok"); }, 2);
  std::vector<media::Image> frames(3, media::Image::solid(2, 2, 0, 0, 0));
  CHECK_THROWS_AS(capped.send({"t", "x", frames}), ValidationError);
  CHECK(invoked == 0);
  CHECK(capped.calls() == 0);
}

TEST_CASE("retry policy backs off on retryable errors only") {
  int attempts = 0;
  llm::MockLlmClient flaky("flaky", [&](const llm::LlmRequest&) -> std::string {
    if (++attempts < 3) throw llm::ProviderError("busy", true, 503);
    return "done";
  });
  std::vector<long> slept;
  llm::RetryPolicy policy;
  policy.sleep = [&](std::chrono::milliseconds d) { slept.push_back(d.count()); };
  llm::Transcript transcript;
  const auto out = llm::call_with_retry(flaky, {"single_action", "p", {}}, policy, &transcript);
  CHECK(out.text == "done");
  CHECK(out.attempts == 3);
  CHECK(slept == std::vector<long>{500, 1000});
  REQUIRE(transcript.size() == 3);
  CHECK_FALSE(transcript.entries()[0].ok);
  CHECK(transcript.entries()[2].ok);
  CHECK(transcript.entries()[2].template_id == "single_action");

  llm::MockLlmClient down("down", [](const llm::LlmRequest&) -> std::string { throw llm::ProviderError("x", true); });
  CHECK_THROWS_AS(llm::call_with_retry(down, {"t", "p", {}}, policy), llm::RetriesExhausted);

  int bad_calls = 0;
  llm::MockLlmClient bad("bad", [&](const llm::LlmRequest&) -> std::string {
    ++bad_calls;
    throw llm::ProviderError("unauthorised", false, 401);
  });
  CHECK_THROWS_AS(llm::call_with_retry(bad, {"t", "p", {}}, policy), llm::ProviderError);
  CHECK(bad_calls == 1);
}

TEST_CASE("call counts match the per-action formula") {
  const std::vector<std::pair<std::vector<double>, std::vector<std::size_t>>> cases = {
      {{30}, {1}}, {{120}, {3}}, {{20, 100}, {1, 3}}, {{45, 46, 600}, {1, 2, 14}}};
  for (const auto& [durations, chunks] : cases) {
    Harness h;
    std::vector<segment::ActionSegment> segs;
    for (std::size_t i = 0; i < durations.size(); ++i) {
      segs.push_back(seg("seg" + std::to_string(i), static_cast<int>(i) + 1, durations[i]));
    }
    const AssessmentReport r = generate_report(session_with(segs), h.ctx());
    CHECK(h.client->calls() == expected_calls(chunks));
    CHECK(h.transcript.size() == expected_calls(chunks));
    CHECK(r.accounting.llm_calls == expected_calls(chunks));
    REQUIRE(r.actions.size() == segs.size());
    for (std::size_t i = 0; i < segs.size(); ++i) {
      CHECK(r.actions[i].segment_id == segs[i].segment_id);
      CHECK(r.actions[i].chunk_count == chunks[i]);
    }
    for (const auto& e : h.transcript.entries()) CHECK(prompts::find_placeholders(e.prompt).empty());
  }
}

TEST_CASE("synthesis prompt embeds every chunk evaluation in order") {
  Harness h;
  int n = 0;
  h.client = std::make_unique<llm::MockLlmClient>("numbered", [&](const llm::LlmRequest& r) {
    return r.template_id + "-reply-" + std::to_string(++n);
  });
  const AssessmentReport r = generate_report(session_with({seg("a", 2, 120)}), h.ctx());
  const auto entries = h.transcript.entries();
  REQUIRE(entries.size() == 5);
  const std::string& synth = entries[3].prompt;
  CHECK(entries[3].template_id == "action_synthesis");
  const auto p1 = synth.find("chunk_evaluation-reply-1");
  const auto p2 = synth.find("chunk_evaluation-reply-2");
  const auto p3 = synth.find("chunk_evaluation-reply-3");
  REQUIRE(p1 != std::string::npos);
  REQUIRE(p2 != std::string::npos);
  REQUIRE(p3 != std::string::npos);
  CHECK(p1 < p2);
  CHECK(p2 < p3);
  CHECK(r.actions[0].chunk_evaluations.size() == 3);
  CHECK(entries[4].template_id == "final_synthesis");
  CHECK(entries[4].prompt.find("action_synthesis-reply-4") != std::string::npos);
}

TEST_CASE("report covers every segment once and is deterministic") {
  std::vector<segment::ActionSegment> segs;
  for (int i = 1; i <= 15; ++i) segs.push_back(seg("s" + std::to_string(i), i, 10));
  Harness h1, h2;
  h1.client = llm::MockLlmClient::hashed();
  h2.client = llm::MockLlmClient::hashed();
  const auto r1 = generate_report(session_with(segs), h1.ctx());
  const auto r2 = generate_report(session_with(segs), h2.ctx());
  CHECK(r1.final_summary == r2.final_summary);
  std::map<std::string, int> seen;
  for (const auto& a : r1.actions) ++seen[a.segment_id];
  CHECK(seen.size() == 15);
  for (const auto& [id, count] : seen) CHECK(count == 1);
  std::size_t finals = 0;
  for (const auto& e : h1.transcript.entries()) finals += e.template_id == "final_synthesis";
  CHECK(finals == 1);

  Harness hp;
  ReportOptions parallel;
  parallel.parallel_actions = 4;
  hp.client = llm::MockLlmClient::hashed();
  const auto rp = generate_report(session_with(segs), hp.ctx(), parallel);
  CHECK(rp.final_summary == r1.final_summary);
}

TEST_CASE("empty session makes no calls") {
  Harness h;
  const auto r = generate_report(session_with({}), h.ctx());
  CHECK(r.actions.empty());
  CHECK(r.final_summary == kNoSegmentsSummary);
  CHECK(h.client->calls() == 0);
  CHECK_THROWS_AS(synthesize_final({}, h.ctx()), ValidationError);
}

TEST_CASE("knowledge text reaches action prompts byte for byte") {
  Harness h;
  // Replies must not echo the prompt, or the final prompt would carry the text too.
  h.client = llm::MockLlmClient::hashed();
  knowledge::KnowledgeCache cache;
  cache.version = 7;
  const std::string text = "[1] (Guide) Keep the elbow soft; avoid {pain} beyond 3/10.";
  cache.entries[2] = {2, {}, text};
  const knowledge::KnowledgeBase kb(cache);
  auto ctx = h.ctx();
  ctx.knowledge = &kb;
  const auto r = generate_report(session_with({seg("a", 2, 20)}), ctx);
  const auto entries = h.transcript.entries();
  CHECK(entries[0].prompt.find(text) != std::string::npos);
  CHECK(entries[1].prompt.find(text) == std::string::npos);
  CHECK(r.knowledge_version == "7");
}

TEST_CASE("provider failures mark the action failed and the report still completes") {
  Harness h;
  h.client = std::make_unique<llm::MockLlmClient>("picky", [](const llm::LlmRequest& r) -> std::string {
    if (r.prompt.find("Action 3") != std::string::npos && r.template_id != "final_synthesis") {
      throw llm::ProviderError("overloaded", true, 529);
    }
    return "fine";
  });
  const auto r = generate_report(session_with({seg("a", 2, 20), seg("b", 3, 20)}), h.ctx());
  CHECK_FALSE(r.actions[0].failed);
  CHECK(r.actions[1].failed);
  CHECK_FALSE(r.final_failed);
  CHECK(r.final_summary == "fine");
}

TEST_CASE("report json round trip") {
  Harness h;
  h.client = llm::MockLlmClient::hashed();
  const auto r = generate_report(session_with({seg("a", 2, 60)}), h.ctx());
  const auto back = report_from_json(report_to_json(r));
  CHECK(report_to_json(back) == report_to_json(r));
  CHECK(back.actions.at(0).chunk_evaluations.size() == 2);
}
