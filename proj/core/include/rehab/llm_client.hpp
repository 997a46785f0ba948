#pragma once

#include "rehab/error.hpp"
#include "rehab/media.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace rehab::llm {

struct LlmRequest {
  std::string template_id;
  std::string prompt;
  std::vector<media::Image> frames;
};

/// Failure reported by a model provider. `retryable` is set for timeouts,
/// rate limits and server-side errors.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& message, bool retryable, int http_status = 0)
      : Error(ErrorCode::provider, message), retryable_(retryable), http_status_(http_status) {}
  bool retryable() const noexcept { return retryable_; }
  int http_status() const noexcept { return http_status_; }

 private:
  bool retryable_;
  int http_status_;
};

/// Raised by the retry wrapper once every attempt has failed.
class RetriesExhausted : public Error {
 public:
  RetriesExhausted(const std::string& message, int attempts)
      : Error(ErrorCode::provider, message), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;

  /// Checks the frame cap before anything leaves the process, then forwards
  /// to the provider. Too many frames is a ValidationError with no call made.
  std::string send(const LlmRequest& request);

  virtual std::string fingerprint() const = 0;
  /// Largest number of frames accepted per request.
  virtual std::size_t max_frames() const = 0;
  std::uint64_t calls() const noexcept { return calls_.load(); }

 protected:
  virtual std::string do_send(const LlmRequest& request) = 0;

 private:
  std::atomic<std::uint64_t> calls_{0};
};

/// Deterministic in-process client. The responder sees the full request and
/// may throw ProviderError to simulate outages.
class MockLlmClient final : public LlmClient {
 public:
  using Responder = std::function<std::string(const LlmRequest&)>;

  MockLlmClient(std::string name, Responder responder, std::size_t max_frames = 64);

  /// "[template_id]" header, the prompt, and a frame summary.
  static std::unique_ptr<MockLlmClient> echo(std::size_t max_frames = 64);
  /// Short text derived from a hash over the prompt and frame pixels.
  static std::unique_ptr<MockLlmClient> hashed(std::size_t max_frames = 64);
  static std::unique_ptr<MockLlmClient> constant(std::string text, std::size_t max_frames = 64);

  std::string fingerprint() const override { return "mock:" + name_; }
  std::size_t max_frames() const override { return max_frames_; }

 protected:
  std::string do_send(const LlmRequest& request) override;

 private:
  std::string name_;
  Responder responder_;
  std::size_t max_frames_;
};

/// Client for OpenAI-compatible `/v1/chat/completions` endpoints that accept
/// inline base64 JPEG images.
class HttpLlmClient final : public LlmClient {
 public:
  struct Options {
    std::string base_url;
    std::string model;
    std::string api_key;
    std::size_t max_frames = 32;
    int timeout_seconds = 120;
    double temperature = 0.2;
    int max_tokens = 1024;
    int jpeg_quality = 80;
  };
  explicit HttpLlmClient(Options options);

  std::string fingerprint() const override { return "http:" + options_.model; }
  std::size_t max_frames() const override { return options_.max_frames; }

 protected:
  std::string do_send(const LlmRequest& request) override;

 private:
  Options options_;
};

struct ProviderConfig {
  std::string kind = "mock-hash";  // mock-hash | mock-echo | openai
  std::string base_url;
  std::string model;
  std::string api_key_env = "REHAB_LLM_API_KEY";
  std::size_t max_frames = 32;
  int timeout_seconds = 120;
  double temperature = 0.2;
  int max_tokens = 1024;
};

ProviderConfig parse_provider_config(const std::string& json_text);
/// Reads the API key from the environment variable named in the config.
std::unique_ptr<LlmClient> make_client(const ProviderConfig& config);

struct TranscriptEntry {
  std::uint64_t seq = 0;
  std::string template_id;
  std::string prompt;
  std::size_t frame_count = 0;
  int attempt = 1;
  bool ok = false;
  std::string response;  // error message when !ok
  double latency_ms = 0.0;
};

/// Thread-safe record of every provider call.
class Transcript {
 public:
  void record(TranscriptEntry entry);
  std::vector<TranscriptEntry> entries() const;
  std::size_t size() const;
  std::string to_jsonl() const;

 private:
  mutable std::mutex mu_;
  std::vector<TranscriptEntry> entries_;
};

struct RetryPolicy {
  int max_retries = 2;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  /// Replaced in tests to avoid real sleeps.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct CallOutcome {
  std::string text;
  int attempts = 0;
  double latency_ms = 0.0;  // of the successful attempt
};

/// Sends with retries on retryable provider errors, logging each attempt to
/// `transcript` when given. Non-retryable errors propagate immediately.
CallOutcome call_with_retry(LlmClient& client, const LlmRequest& request, const RetryPolicy& policy,
                            Transcript* transcript = nullptr);

}  // namespace rehab::llm
