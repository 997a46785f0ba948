#pragma once

#include "rehab/model/trainer.hpp"

#include <string>
#include <vector>

namespace rehab::model {

struct AblationRow {
  Variant variant = Variant::full;
  std::int64_t parameters = 0;
  std::int64_t trainable_parameters = 0;
  std::int64_t skeleton_parameters = 0;
  eval::MetricReport metrics;
  TrainResult training;
};

struct AblationOptions {
  ModelConfig base;  // variant overridden per row
  TrainConfig train;
  std::uint64_t init_seed = 0;
};

/// Trains and tests each variant from the same seeds.
std::vector<AblationRow> run_ablation(const std::vector<Variant>& variants, const ClassCatalog& catalog,
                                      const ClipProvider& train_set, const ClipProvider* val_set,
                                      const ClipProvider& test_set, const AblationOptions& options);

/// Parses variant names; unknown names are a ConfigError.
std::vector<Variant> parse_variants(const std::vector<std::string>& names);

std::string ablation_to_json(const std::vector<AblationRow>& rows);
/// "variant,parameters,skeleton_parameters,weighted_f1,top1,top3" rows.
std::string ablation_to_csv(const std::vector<AblationRow>& rows);

}  // namespace rehab::model
