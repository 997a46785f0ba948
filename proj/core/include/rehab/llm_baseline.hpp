#pragma once

#include "rehab/catalog.hpp"
#include "rehab/llm_client.hpp"
#include "rehab/media.hpp"
#include "rehab/metrics.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rehab::eval {

enum class BaselineMode { zero_shot, few_shot };
std::string to_string(BaselineMode mode);
BaselineMode baseline_mode_from_string(std::string_view name);

struct BaselineSample {
  std::string sample_id;
  int label = 0;
  std::vector<media::Image> frames;
};

struct FewShotExemplar {
  int label = 0;
  std::string sample_id;
  std::vector<media::Image> frames;
};

/// First run of decimal digits in the reply, if any.
std::optional<int> parse_action_number(std::string_view reply);

/// One exemplar per class present in `pool`, chosen by a seeded draw, in
/// class order.
std::vector<FewShotExemplar> select_exemplars(std::span<const BaselineSample> pool, std::uint64_t seed);

struct BaselineRecord {
  std::string sample_id;
  int truth = 0;
  std::optional<int> predicted;
  std::string reply;
  double latency_ms = 0.0;
  bool error = false;  // provider failure after retries
};

struct LatencyStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double max_ms = 0.0;
};

struct BaselineResult {
  BaselineMode mode = BaselineMode::zero_shot;
  MetricReport metrics;  // top-3 left empty
  std::vector<BaselineRecord> records;
  LatencyStats latency;
  std::size_t unparsed = 0;
};

struct BaselineOptions {
  llm::RetryPolicy retry;
  llm::Transcript* transcript = nullptr;
};

/// Asks the model for a class number per sample. Unreadable or out-of-range
/// answers and provider failures count as misses.
BaselineResult run_llm_baseline(BaselineMode mode, std::span<const BaselineSample> samples, const ClassCatalog& catalog,
                                llm::LlmClient& client, std::span<const FewShotExemplar> exemplars = {},
                                const BaselineOptions& options = {});

std::string baseline_to_json(const BaselineResult& result);

}  // namespace rehab::eval
