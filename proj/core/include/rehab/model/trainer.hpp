#pragma once

#include "rehab/metrics.hpp"
#include "rehab/model/clip_provider.hpp"
#include "rehab/model/recognizer.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace rehab::model {

struct EpochMetrics {
  std::int64_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_weighted_f1;
  std::optional<double> val_top1;
  std::int64_t steps = 0;  // cumulative
  bool best = false;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  std::vector<double> step_losses;
  std::int64_t best_epoch = 0;
  std::optional<double> best_val_f1;
  std::optional<std::filesystem::path> checkpoint;
};

struct TrainOptions {
  TrainConfig config;
  /// Best checkpoint written here when set.
  std::optional<std::filesystem::path> checkpoint_path;
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Cosine decay after linear warmup.
double learning_rate_at(const TrainConfig& config, std::int64_t step, std::int64_t total_steps);

/// AdamW with cross-entropy. Validation runs after every epoch; the epoch
/// with the best weighted F1 (earliest on ties) is kept, restored into
/// `model` and written to the checkpoint. Without a validation set the last
/// epoch is kept. Identical seeds give identical results.
TrainResult train(Recognizer& model, const ClipProvider& train_set, const ClipProvider* val_set,
                  const TrainOptions& options);

/// Logits for every clip, in order, in eval mode.
torch::Tensor predict_logits(Recognizer& model, const ClipProvider& clips, std::int64_t batch_size = 16);

eval::MetricReport evaluate(Recognizer& model, const ClipProvider& clips, std::int64_t batch_size = 16);

std::string history_to_json(const TrainResult& result);

}  // namespace rehab::model
