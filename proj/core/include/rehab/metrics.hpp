#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rehab::eval {

struct MetricReport {
  std::size_t num_classes = 0;
  std::size_t samples = 0;
  double weighted_f1 = 0.0;
  double top1_accuracy = 0.0;
  std::optional<double> top3_accuracy;  // absent for label-only predictions
  std::vector<double> precision;        // per class; 0 when never predicted
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<std::int64_t> support;
  std::vector<std::vector<std::int64_t>> confusion;  // [truth][predicted]
  /// Samples whose prediction could not be read; they count as misses and
  /// are left out of the confusion matrix.
  std::vector<std::int64_t> unparsed;  // per true class
};

/// Metrics from a score matrix (one row of `num_classes` scores per sample).
/// Top-1 is the highest score, lowest class id on ties; top-3 asks whether
/// fewer than three classes rank ahead of the truth under the same order.
MetricReport compute_metrics(std::span<const int> y_true, const std::vector<std::vector<double>>& scores,
                             std::size_t num_classes = 16);

/// Metrics from hard predictions; std::nullopt marks an unreadable answer.
MetricReport compute_metrics_from_labels(std::span<const int> y_true, std::span<const std::optional<int>> y_pred,
                                         std::size_t num_classes = 16);

std::string metrics_to_json(const MetricReport& report);
/// "truth,pred_0,...,pred_{k-1}" rows.
std::string confusion_to_csv(const MetricReport& report);

inline constexpr int kLikertMin = 1;
inline constexpr int kLikertMax = 10;

struct LikertDataset {
  std::string model_id;
  std::string dimension;
  std::vector<int> scores;
};

struct LikertCell {
  std::string model_id;
  std::string dimension;
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // sample variance
};

struct LikertComparison {
  std::string enhanced_model;
  std::string plain_model;
  std::string dimension;
  double u = 0.0;
  double p_value = 1.0;
  bool exact = false;
  bool significant = false;
};

struct LikertSummary {
  std::vector<std::string> models;      // first-seen order
  std::vector<std::string> dimensions;  // first-seen order
  std::vector<LikertCell> cells;        // models x dimensions, row-major
  std::vector<LikertComparison> comparisons;
  double alpha = 0.05;

  const LikertCell& cell(const std::string& model, const std::string& dimension) const;
};

/// Means and variances per (model, dimension), plus a Mann-Whitney test on
/// every dimension for each (enhanced, plain) pair.
LikertSummary likert_summary(std::span<const LikertDataset> datasets,
                             std::span<const std::pair<std::string, std::string>> pairs, double alpha = 0.05);

/// model,dimension,n,mean,variance rows followed by a blank line and
/// enhanced,plain,dimension,u,p_value,significant rows.
std::string likert_to_csv(const LikertSummary& summary);
std::string likert_to_json(const LikertSummary& summary);

}  // namespace rehab::eval
