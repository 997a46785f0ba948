#include "rehab/llm_baseline.hpp"

#include "rehab/error.hpp"
#include "rehab/prompts.hpp"
#include "rehab/report_generator.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <random>

namespace rehab::eval {

using nlohmann::json;

std::string to_string(BaselineMode mode) { return mode == BaselineMode::zero_shot ? "zero_shot" : "few_shot"; }

BaselineMode baseline_mode_from_string(std::string_view name) {
  if (name == "zero_shot" || name == "zero-shot") return BaselineMode::zero_shot;
  if (name == "few_shot" || name == "few-shot") return BaselineMode::few_shot;
  throw ConfigError("unknown baseline mode '" + std::string(name) + "'");
}

std::optional<int> parse_action_number(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size() && std::isdigit(static_cast<unsigned char>(reply[i])) == 0) ++i;
  if (i == reply.size()) return std::nullopt;
  std::size_t j = i;
  while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j])) != 0) ++j;
  if (j - i > 6) return std::nullopt;
  return std::stoi(std::string(reply.substr(i, j - i)));
}

std::vector<FewShotExemplar> select_exemplars(std::span<const BaselineSample> pool, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < pool.size(); ++i) by_class[pool[i].label].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<FewShotExemplar> out;
  for (const auto& [label, members] : by_class) {
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    const auto& s = pool[members[pick(rng)]];
    out.push_back({label, s.sample_id, s.frames});
  }
  return out;
}

namespace {

struct FewShotPayload {
  std::string examples_text;
  std::vector<media::Image> frames;
};

// Exemplar frames go first, in exemplar order, each thinned so that all of
// them plus the query fit the provider cap.
FewShotPayload few_shot_payload(std::span<const FewShotExemplar> exemplars, std::size_t query_frames,
                                std::size_t cap) {
  if (exemplars.empty()) throw ValidationError("exemplars", "few-shot mode needs at least one exemplar");
  if (query_frames >= cap) throw ValidationError("frames", "query alone fills the provider frame cap");
  const std::size_t per = (cap - query_frames) / exemplars.size();
  if (per == 0) throw ValidationError("exemplars", "too many exemplars for the provider frame cap");
  FewShotPayload p;
  std::size_t next = 1;
  for (std::size_t e = 0; e < exemplars.size(); ++e) {
    const auto& ex = exemplars[e];
    const auto picks = report::thin_uniform(ex.frames.size(), per);
    for (auto k : picks) p.frames.push_back(ex.frames[k]);
    if (e) p.examples_text += '\n';
    p.examples_text += "{video frames " + std::to_string(next) + "-" + std::to_string(next + picks.size() - 1) +
                       "} Action: " + std::to_string(ex.label);
    next += picks.size();
  }
  return p;
}

}  // namespace

BaselineResult run_llm_baseline(BaselineMode mode, std::span<const BaselineSample> samples, const ClassCatalog& catalog,
                                llm::LlmClient& client, std::span<const FewShotExemplar> exemplars,
                                const BaselineOptions& options) {
  BaselineResult result;
  result.mode = mode;
  const std::string class_list = catalog.numbered_list();
  std::vector<int> truths;
  std::vector<std::optional<int>> preds;
  std::vector<double> latencies;
  for (const auto& s : samples) {
    llm::LlmRequest req;
    if (mode == BaselineMode::zero_shot) {
      req.template_id = std::string(prompts::kZeroShot);
      req.prompt = prompts::render(prompts::get(prompts::kZeroShot), {{"class_list_str", class_list}});
    } else {
      auto payload = few_shot_payload(exemplars, s.frames.size(), client.max_frames());
      req.template_id = std::string(prompts::kFewShot);
      req.prompt = prompts::render(prompts::get(prompts::kFewShot),
                                   {{"class_list_str", class_list}, {"few_shot_examples", payload.examples_text}});
      req.frames = std::move(payload.frames);
    }
    req.frames.insert(req.frames.end(), s.frames.begin(), s.frames.end());

    BaselineRecord rec{s.sample_id, s.label, std::nullopt, {}, 0.0, false};
    try {
      auto outcome = llm::call_with_retry(client, req, options.retry, options.transcript);
      rec.reply = outcome.text;
      rec.latency_ms = outcome.latency_ms;
      rec.predicted = parse_action_number(outcome.text);
      if (!rec.predicted || !catalog.contains(*rec.predicted)) {
        spdlog::info("baseline sample {}: unreadable answer '{}'", s.sample_id, outcome.text.substr(0, 80));
        rec.predicted.reset();
        ++result.unparsed;
      }
      latencies.push_back(rec.latency_ms);
    } catch (const llm::RetriesExhausted& e) {
      rec.error = true;
      rec.reply = e.what();
    } catch (const llm::ProviderError& e) {
      rec.error = true;
      rec.reply = e.what();
    }
    truths.push_back(s.label);
    preds.push_back(rec.predicted);
    result.records.push_back(std::move(rec));
  }
  result.metrics = compute_metrics_from_labels(truths, preds, std::max<std::size_t>(catalog.size(), 1));
  if (!latencies.empty()) {
    std::sort(latencies.begin(), latencies.end());
    double sum = 0.0;
    for (double l : latencies) sum += l;
    result.latency.mean_ms = sum / static_cast<double>(latencies.size());
    const std::size_t n = latencies.size();
    result.latency.median_ms = n % 2 ? latencies[n / 2] : (latencies[n / 2 - 1] + latencies[n / 2]) / 2.0;
    result.latency.max_ms = latencies.back();
  }
  return result;
}

std::string baseline_to_json(const BaselineResult& r) {
  json records = json::array();
  for (const auto& rec : r.records) {
    records.push_back({{"sample_id", rec.sample_id},
                       {"truth", rec.truth},
                       {"predicted", rec.predicted ? json(*rec.predicted) : json(nullptr)},
                       {"latency_ms", rec.latency_ms},
                       {"error", rec.error},
                       {"reply", rec.reply}});
  }
  return json{{"mode", to_string(r.mode)},
              {"metrics", json::parse(metrics_to_json(r.metrics))},
              {"latency", {{"mean_ms", r.latency.mean_ms}, {"median_ms", r.latency.median_ms}, {"max_ms", r.latency.max_ms}}},
              {"unparsed", r.unparsed},
              {"records", records}}
      .dump(2);
}

}  // namespace rehab::eval
