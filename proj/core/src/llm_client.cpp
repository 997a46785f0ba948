#include "rehab/llm_client.hpp"

#include "rehab/tokenizer.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <thread>

namespace rehab::llm {

using nlohmann::json;

std::string LlmClient::send(const LlmRequest& request) {
  if (request.frames.size() > max_frames()) {
    throw ValidationError("frames", std::to_string(request.frames.size()) + " frames exceed the provider cap of " +
                                        std::to_string(max_frames()));
  }
  ++calls_;
  return do_send(request);
}

MockLlmClient::MockLlmClient(std::string name, Responder responder, std::size_t max_frames)
    : name_(std::move(name)), responder_(std::move(responder)), max_frames_(max_frames) {}

std::string MockLlmClient::do_send(const LlmRequest& request) { return responder_(request); }

namespace {

std::uint64_t frames_hash(const std::vector<media::Image>& frames) {
  std::uint64_t h = text::fnv1a("frames");
  for (const auto& f : frames) {
    h = text::fnv1a(std::to_string(f.width) + "x" + std::to_string(f.height), h);
    h = text::fnv1a(std::string_view(reinterpret_cast<const char*>(f.rgb.data()), f.rgb.size()), h);
  }
  return h;
}

}  // namespace

std::unique_ptr<MockLlmClient> MockLlmClient::echo(std::size_t max_frames) {
  return std::make_unique<MockLlmClient>(
      "echo",
      [](const LlmRequest& r) {
        return "[" + r.template_id + "]\n" + r.prompt + "\n[frames: " + std::to_string(r.frames.size()) + "]";
      },
      max_frames);
}

std::unique_ptr<MockLlmClient> MockLlmClient::hashed(std::size_t max_frames) {
  return std::make_unique<MockLlmClient>(
      "hash",
      [](const LlmRequest& r) {
        const auto h = text::fnv1a(r.prompt, frames_hash(r.frames));
        return "Assessment " + text::hex64(h) + " for " + r.template_id + " over " + std::to_string(r.frames.size()) +
               " frames.";
      },
      max_frames);
}

std::unique_ptr<MockLlmClient> MockLlmClient::constant(std::string text, std::size_t max_frames) {
  return std::make_unique<MockLlmClient>(
      "constant", [text = std::move(text)](const LlmRequest&) { return text; }, max_frames);
}

HttpLlmClient::HttpLlmClient(Options options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw ConfigError("llm provider: base_url is required");
  if (options_.model.empty()) throw ConfigError("llm provider: model is required");
}

std::string HttpLlmClient::do_send(const LlmRequest& request) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", request.prompt}});
  for (const auto& frame : request.frames) {
    const auto jpeg = media::encode_jpeg(frame, options_.jpeg_quality);
    content.push_back(
        {{"type", "image_url"}, {"image_url", {{"url", "data:image/jpeg;base64," + media::base64_encode(jpeg)}}}});
  }
  const json body = {{"model", options_.model},
                     {"temperature", options_.temperature},
                     {"max_tokens", options_.max_tokens},
                     {"messages", json::array({{{"role", "user"}, {"content", content}}})}};

  httplib::Client client(options_.base_url);
  client.set_connection_timeout(options_.timeout_seconds, 0);
  client.set_read_timeout(options_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
  auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
  if (!res) throw ProviderError("request failed: " + httplib::to_string(res.error()), true);
  if (res->status == 429 || res->status >= 500) {
    throw ProviderError("provider returned HTTP " + std::to_string(res->status), true, res->status);
  }
  if (res->status != 200) {
    throw ProviderError("provider returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200),
                        false, res->status);
  }
  try {
    return json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed completion response: ") + e.what(), false, res->status);
  }
}

ProviderConfig parse_provider_config(const std::string& json_text) {
  ProviderConfig c;
  try {
    const json j = json::parse(json_text);
    c.kind = j.value("kind", c.kind);
    c.base_url = j.value("base_url", c.base_url);
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.max_frames = j.value("max_frames", c.max_frames);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.temperature = j.value("temperature", c.temperature);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("llm provider config: ") + e.what());
  }
  if (c.max_frames == 0) throw ConfigError("llm provider config: max_frames must be positive");
  return c;
}

std::unique_ptr<LlmClient> make_client(const ProviderConfig& config) {
  if (config.kind == "mock-hash") return MockLlmClient::hashed(config.max_frames);
  if (config.kind == "mock-echo") return MockLlmClient::echo(config.max_frames);
  if (config.kind == "openai") {
    HttpLlmClient::Options o;
    o.base_url = config.base_url;
    o.model = config.model;
    if (const char* key = std::getenv(config.api_key_env.c_str())) o.api_key = key;
    o.max_frames = config.max_frames;
    o.timeout_seconds = config.timeout_seconds;
    o.temperature = config.temperature;
    o.max_tokens = config.max_tokens;
    return std::make_unique<HttpLlmClient>(std::move(o));
  }
  throw ConfigError("unknown llm provider kind '" + config.kind + "'");
}

void Transcript::record(TranscriptEntry entry) {
  std::lock_guard lock(mu_);
  entry.seq = entries_.size();
  entries_.push_back(std::move(entry));
}

std::vector<TranscriptEntry> Transcript::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t Transcript::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::string Transcript::to_jsonl() const {
  std::lock_guard lock(mu_);
  std::string out;
  for (const auto& e : entries_) {
    out += json{{"seq", e.seq},
                {"template_id", e.template_id},
                {"frame_count", e.frame_count},
                {"attempt", e.attempt},
                {"ok", e.ok},
                {"latency_ms", e.latency_ms},
                {"prompt", e.prompt},
                {"response", e.response}}
               .dump();
    out += '\n';
  }
  return out;
}

CallOutcome call_with_retry(LlmClient& client, const LlmRequest& request, const RetryPolicy& policy,
                            Transcript* transcript) {
  auto backoff = policy.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= policy.max_retries + 1; ++attempt) {
    const auto t0 = std::chrono::steady_clock::now();
    TranscriptEntry entry{0, request.template_id, request.prompt, request.frames.size(), attempt, false, {}, 0.0};
    try {
      std::string text = client.send(request);
      entry.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      entry.ok = true;
      entry.response = text;
      const double latency = entry.latency_ms;
      if (transcript) transcript->record(std::move(entry));
      return {std::move(text), attempt, latency};
    } catch (const ProviderError& e) {
      entry.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      entry.response = e.what();
      if (transcript) transcript->record(std::move(entry));
      if (!e.retryable()) throw;
      last_error = e.what();
      spdlog::warn("llm call for {} failed (attempt {}): {}", request.template_id, attempt, e.what());
    }
    if (attempt <= policy.max_retries) {
      if (policy.sleep) {
        policy.sleep(backoff);
      } else {
        std::this_thread::sleep_for(backoff);
      }
      backoff = std::chrono::milliseconds(static_cast<std::int64_t>(static_cast<double>(backoff.count()) * policy.multiplier));
    }
  }
  throw RetriesExhausted("llm call for " + request.template_id + " failed after " +
                             std::to_string(policy.max_retries + 1) + " attempts: " + last_error,
                         policy.max_retries + 1);
}

}  // namespace rehab::llm
