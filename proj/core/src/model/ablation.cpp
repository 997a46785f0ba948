#include "rehab/model/ablation.hpp"

#include <json.hpp>

#include <sstream>

namespace rehab::model {

std::vector<AblationRow> run_ablation(const std::vector<Variant>& variants, const ClassCatalog& catalog,
                                      const ClipProvider& train_set, const ClipProvider* val_set,
                                      const ClipProvider& test_set, const AblationOptions& options) {
  std::vector<AblationRow> rows;
  for (const auto v : variants) {
    ModelConfig cfg = options.base;
    cfg.variant = v;
    auto model = make_recognizer(cfg, catalog, options.init_seed);
    AblationRow row;
    row.variant = v;
    row.parameters = model->parameter_count();
    row.trainable_parameters = model->trainable_parameter_count();
    row.skeleton_parameters = model->skeleton_parameter_count();
    row.training = train(model, train_set, val_set, {options.train, std::nullopt, nullptr});
    row.metrics = evaluate(model, test_set);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<Variant> parse_variants(const std::vector<std::string>& names) {
  std::vector<Variant> out;
  for (const auto& n : names) out.push_back(variant_from_string(n));
  return out;
}

std::string ablation_to_json(const std::vector<AblationRow>& rows) {
  using nlohmann::json;
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"variant", to_string(r.variant)},
                   {"parameters", r.parameters},
                   {"trainable_parameters", r.trainable_parameters},
                   {"skeleton_parameters", r.skeleton_parameters},
                   {"best_epoch", r.training.best_epoch},
                   {"metrics", json::parse(eval::metrics_to_json(r.metrics))}});
  }
  return out.dump(2);
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed << "variant,parameters,skeleton_parameters,weighted_f1,top1,top3\n";
  for (const auto& r : rows) {
    out << to_string(r.variant) << ',' << r.parameters << ',' << r.skeleton_parameters << ','
        << r.metrics.weighted_f1 << ',' << r.metrics.top1_accuracy << ',';
    if (r.metrics.top3_accuracy) out << *r.metrics.top3_accuracy;
    out << '\n';
  }
  return out.str();
}

}  // namespace rehab::model
