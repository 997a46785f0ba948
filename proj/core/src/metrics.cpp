#include "rehab/metrics.hpp"

#include "rehab/error.hpp"
#include "rehab/statistics.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <map>

namespace rehab::eval {

using nlohmann::json;

namespace {

MetricReport empty_report(std::size_t num_classes) {
  MetricReport r;
  r.num_classes = num_classes;
  r.precision.assign(num_classes, 0.0);
  r.recall.assign(num_classes, 0.0);
  r.f1.assign(num_classes, 0.0);
  r.support.assign(num_classes, 0);
  r.unparsed.assign(num_classes, 0);
  r.confusion.assign(num_classes, std::vector<std::int64_t>(num_classes, 0));
  return r;
}

void check_label(int label, std::size_t num_classes, const char* what) {
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
    throw ValidationError(what, "label " + std::to_string(label) + " outside 0.." + std::to_string(num_classes - 1));
  }
}

void finish(MetricReport& r) {
  std::vector<std::int64_t> predicted(r.num_classes, 0);
  std::int64_t correct = 0;
  for (std::size_t t = 0; t < r.num_classes; ++t) {
    for (std::size_t p = 0; p < r.num_classes; ++p) predicted[p] += r.confusion[t][p];
    correct += r.confusion[t][t];
  }
  double wf1 = 0.0;
  for (std::size_t c = 0; c < r.num_classes; ++c) {
    const double tp = static_cast<double>(r.confusion[c][c]);
    r.precision[c] = predicted[c] > 0 ? tp / static_cast<double>(predicted[c]) : 0.0;
    r.recall[c] = r.support[c] > 0 ? tp / static_cast<double>(r.support[c]) : 0.0;
    const double denom = r.precision[c] + r.recall[c];
    r.f1[c] = denom > 0.0 ? 2.0 * r.precision[c] * r.recall[c] / denom : 0.0;
    wf1 += r.f1[c] * static_cast<double>(r.support[c]);
  }
  if (r.samples > 0) {
    r.weighted_f1 = wf1 / static_cast<double>(r.samples);
    r.top1_accuracy = static_cast<double>(correct) / static_cast<double>(r.samples);
  }
}

}  // namespace

MetricReport compute_metrics(std::span<const int> y_true, const std::vector<std::vector<double>>& scores,
                             std::size_t num_classes) {
  if (num_classes == 0) throw ValidationError("num_classes", "must be positive");
  if (y_true.size() != scores.size()) {
    throw ValidationError("scores", std::to_string(scores.size()) + " score rows for " +
                                        std::to_string(y_true.size()) + " labels");
  }
  MetricReport r = empty_report(num_classes);
  r.samples = y_true.size();
  std::int64_t top3 = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i];
    check_label(t, num_classes, "y_true");
    const auto& row = scores[i];
    if (row.size() != num_classes) {
      throw ValidationError("scores", "row " + std::to_string(i) + " has " + std::to_string(row.size()) +
                                          " columns, expected " + std::to_string(num_classes));
    }
    const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (row[c] > row[static_cast<std::size_t>(t)] || (row[c] == row[static_cast<std::size_t>(t)] && c < static_cast<std::size_t>(t))) ++ahead;
    }
    if (ahead < 3) ++top3;
    r.support[static_cast<std::size_t>(t)] += 1;
    r.confusion[static_cast<std::size_t>(t)][pred] += 1;
  }
  finish(r);
  r.top3_accuracy = r.samples > 0 ? static_cast<double>(top3) / static_cast<double>(r.samples) : 0.0;
  return r;
}

MetricReport compute_metrics_from_labels(std::span<const int> y_true, std::span<const std::optional<int>> y_pred,
                                         std::size_t num_classes) {
  if (num_classes == 0) throw ValidationError("num_classes", "must be positive");
  if (y_true.size() != y_pred.size()) {
    throw ValidationError("y_pred", std::to_string(y_pred.size()) + " predictions for " +
                                        std::to_string(y_true.size()) + " labels");
  }
  MetricReport r = empty_report(num_classes);
  r.samples = y_true.size();
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i];
    check_label(t, num_classes, "y_true");
    r.support[static_cast<std::size_t>(t)] += 1;
    const auto& p = y_pred[i];
    if (!p || *p < 0 || static_cast<std::size_t>(*p) >= num_classes) {
      r.unparsed[static_cast<std::size_t>(t)] += 1;
      continue;
    }
    r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(*p)] += 1;
  }
  finish(r);
  return r;
}

std::string metrics_to_json(const MetricReport& r) {
  json j = {{"num_classes", r.num_classes}, {"samples", r.samples},   {"weighted_f1", r.weighted_f1},
            {"top1_accuracy", r.top1_accuracy}, {"precision", r.precision}, {"recall", r.recall},
            {"f1", r.f1},                     {"support", r.support}, {"confusion", r.confusion},
            {"unparsed", r.unparsed}};
  j["top3_accuracy"] = r.top3_accuracy ? json(*r.top3_accuracy) : json(nullptr);
  return j.dump(2);
}

std::string confusion_to_csv(const MetricReport& r) {
  std::string out = "truth";
  for (std::size_t p = 0; p < r.num_classes; ++p) out += fmt::format(",pred_{}", p);
  out += '\n';
  for (std::size_t t = 0; t < r.num_classes; ++t) {
    out += std::to_string(t);
    for (auto v : r.confusion[t]) out += "," + std::to_string(v);
    out += '\n';
  }
  return out;
}

const LikertCell& LikertSummary::cell(const std::string& model, const std::string& dimension) const {
  for (const auto& c : cells) {
    if (c.model_id == model && c.dimension == dimension) return c;
  }
  throw NotFoundError("no Likert cell for " + model + " / " + dimension);
}

LikertSummary likert_summary(std::span<const LikertDataset> datasets,
                             std::span<const std::pair<std::string, std::string>> pairs, double alpha) {
  LikertSummary s;
  s.alpha = alpha;
  std::map<std::pair<std::string, std::string>, std::vector<double>> scores;
  for (const auto& d : datasets) {
    if (d.scores.empty()) throw ValidationError(d.model_id + "/" + d.dimension, "no scores");
    for (int v : d.scores) {
      if (v < kLikertMin || v > kLikertMax) {
        throw ValidationError(d.dimension, "score " + std::to_string(v) + " outside 1..10 for model " + d.model_id);
      }
    }
    if (!scores.emplace(std::pair{d.model_id, d.dimension}, std::vector<double>(d.scores.begin(), d.scores.end()))
             .second) {
      throw ValidationError(d.model_id + "/" + d.dimension, "duplicate dataset");
    }
    if (std::find(s.models.begin(), s.models.end(), d.model_id) == s.models.end()) s.models.push_back(d.model_id);
    if (std::find(s.dimensions.begin(), s.dimensions.end(), d.dimension) == s.dimensions.end()) {
      s.dimensions.push_back(d.dimension);
    }
  }
  for (const auto& m : s.models) {
    for (const auto& dim : s.dimensions) {
      auto it = scores.find({m, dim});
      if (it == scores.end()) {
        s.cells.push_back({m, dim, 0, 0.0, 0.0});
        continue;
      }
      s.cells.push_back({m, dim, it->second.size(), stats::mean(it->second), stats::sample_variance(it->second)});
    }
  }
  for (const auto& [enhanced, plain] : pairs) {
    for (const auto& dim : s.dimensions) {
      auto a = scores.find({enhanced, dim});
      auto b = scores.find({plain, dim});
      if (a == scores.end() && b == scores.end()) continue;
      if (a == scores.end() || b == scores.end()) {
        throw ValidationError(dim, "dimension scored for only one of " + enhanced + " and " + plain);
      }
      const auto mw = stats::mann_whitney_u(a->second, b->second);
      s.comparisons.push_back({enhanced, plain, dim, mw.u, mw.p_value, mw.exact, mw.p_value < alpha});
    }
  }
  return s;
}

std::string likert_to_csv(const LikertSummary& s) {
  std::string out = "model,dimension,n,mean,variance\n";
  for (const auto& c : s.cells) out += fmt::format("{},{},{},{:.4f},{:.4f}\n", c.model_id, c.dimension, c.n, c.mean, c.variance);
  out += "\nenhanced,plain,dimension,u,p_value,significant\n";
  for (const auto& c : s.comparisons) {
    out += fmt::format("{},{},{},{:.1f},{:.6g},{}\n", c.enhanced_model, c.plain_model, c.dimension, c.u, c.p_value,
                       c.significant ? 1 : 0);
  }
  return out;
}

std::string likert_to_json(const LikertSummary& s) {
  json cells = json::array();
  for (const auto& c : s.cells) {
    cells.push_back({{"model", c.model_id}, {"dimension", c.dimension}, {"n", c.n}, {"mean", c.mean}, {"variance", c.variance}});
  }
  json comps = json::array();
  for (const auto& c : s.comparisons) {
    comps.push_back({{"enhanced", c.enhanced_model}, {"plain", c.plain_model}, {"dimension", c.dimension},
                     {"u", c.u}, {"p_value", c.p_value}, {"exact", c.exact}, {"significant", c.significant}});
  }
  return json{{"alpha", s.alpha}, {"models", s.models}, {"dimensions", s.dimensions}, {"cells", cells},
              {"comparisons", comps}}
      .dump(2);
}

}  // namespace rehab::eval
