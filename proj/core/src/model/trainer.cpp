#include "rehab/model/trainer.hpp"

#include "rehab/error.hpp"

#include <json.hpp>
#include "rehab/log.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace rehab::model {

double learning_rate_at(const TrainConfig& c, std::int64_t step, std::int64_t total_steps) {
  if (c.warmup_steps > 0 && step < c.warmup_steps) {
    return c.lr * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
  }
  const auto span = std::max<std::int64_t>(1, total_steps - c.warmup_steps);
  const double progress = std::clamp(static_cast<double>(step - c.warmup_steps) / static_cast<double>(span), 0.0, 1.0);
  return c.lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

torch::Tensor predict_logits(Recognizer& model, const ClipProvider& clips, std::int64_t batch_size) {
  torch::NoGradGuard guard;
  const bool was_training = model->is_training();
  model->eval();
  std::vector<torch::Tensor> out;
  std::vector<ClipExample> chunk;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    chunk.push_back(clips.at(i));
    if (static_cast<std::int64_t>(chunk.size()) == batch_size || i + 1 == clips.size()) {
      const auto b = collate(chunk);
      b.validate(model->config());
      out.push_back(model->forward(b.frames, b.skeleton));
      chunk.clear();
    }
  }
  model->train(was_training);
  if (out.empty()) return torch::empty({0, model->config().num_classes});
  return torch::cat(out);
}

eval::MetricReport evaluate(Recognizer& model, const ClipProvider& clips, std::int64_t batch_size) {
  if (clips.size() == 0) throw ValidationError("clips", "nothing to evaluate");
  const auto logits = predict_logits(model, clips, batch_size).to(torch::kDouble).contiguous();
  std::vector<int> truth;
  std::vector<std::vector<double>> scores;
  const auto rows = logits.size(0);
  const auto cols = logits.size(1);
  const double* p = logits.data_ptr<double>();
  for (std::int64_t r = 0; r < rows; ++r) {
    truth.push_back(static_cast<int>(clips.at(static_cast<std::size_t>(r)).label));
    scores.emplace_back(p + r * cols, p + (r + 1) * cols);
  }
  return eval::compute_metrics(truth, scores, static_cast<std::size_t>(cols));
}

namespace {

using StateDict = std::vector<std::pair<std::string, torch::Tensor>>;

StateDict snapshot(Recognizer& model) {
  StateDict s;
  for (const auto& p : model->named_parameters()) s.emplace_back(p.key(), p.value().detach().clone());
  return s;
}

void restore(Recognizer& model, const StateDict& state) {
  torch::NoGradGuard guard;
  auto params = model->named_parameters();
  for (const auto& [name, value] : state) params[name].copy_(value);
}

}  // namespace

TrainResult train(Recognizer& model, const ClipProvider& train_set, const ClipProvider* val_set,
                  const TrainOptions& options) {
  const auto& cfg = options.config;
  if (train_set.size() == 0) throw ValidationError("train_set", "no training clips");
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const auto label = train_set.at(i).label;
    if (label < 0 || label >= model->config().num_classes) {
      throw ConfigError("training label " + std::to_string(label) + " has no class description");
    }
  }
  torch::manual_seed(cfg.seed);
  std::mt19937_64 rng(cfg.seed);

  std::vector<torch::Tensor> trainable;
  for (auto& p : model->parameters()) {
    if (p.requires_grad()) trainable.push_back(p);
  }
  torch::optim::AdamW optimizer(trainable, torch::optim::AdamWOptions(cfg.lr).weight_decay(cfg.weight_decay));

  const auto n = static_cast<std::int64_t>(train_set.size());
  const auto steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  auto total_steps = steps_per_epoch * cfg.epochs;
  if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);

  std::vector<ClipExample> examples;
  examples.reserve(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) examples.push_back(train_set.at(i));

  TrainResult result;
  StateDict best_state;
  std::int64_t step = 0;
  std::vector<std::size_t> order(examples.size());

  for (std::int64_t epoch = 1; epoch <= cfg.epochs && step < total_steps; ++epoch) {
    model->train();
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::int64_t correct = 0, seen = 0;
    for (std::int64_t start = 0; start < n && step < total_steps; start += cfg.batch_size) {
      const auto len = std::min(cfg.batch_size, n - start);
      const auto batch = collate(examples, std::span<const std::size_t>(order).subspan(
                                               static_cast<std::size_t>(start), static_cast<std::size_t>(len)));
      batch.validate(model->config());
      const double lr = learning_rate_at(cfg, step, total_steps);
      for (auto& group : optimizer.param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);

      optimizer.zero_grad();
      const auto logits = model->forward(batch.frames, batch.skeleton);
      const auto loss = torch::nn::functional::cross_entropy(logits, batch.labels);
      loss.backward();
      if (cfg.grad_clip > 0.0) torch::nn::utils::clip_grad_norm_(trainable, cfg.grad_clip);
      optimizer.step();
      model->clamp_temperature();

      const double l = loss.item<double>();
      if (!std::isfinite(l)) throw Error(ErrorCode::internal, "training diverged at step " + std::to_string(step));
      result.step_losses.push_back(l);
      loss_sum += l * static_cast<double>(len);
      correct += logits.argmax(1).eq(batch.labels).sum().item<std::int64_t>();
      seen += len;
      ++step;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(seen);
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    m.steps = step;
    bool improved = true;
    if (val_set && val_set->size() > 0) {
      const auto report = evaluate(model, *val_set);
      m.val_weighted_f1 = report.weighted_f1;
      m.val_top1 = report.top1_accuracy;
      improved = !result.best_val_f1 || report.weighted_f1 > *result.best_val_f1;
    }
    if (improved) {
      result.best_epoch = epoch;
      result.best_val_f1 = m.val_weighted_f1;
      best_state = snapshot(model);
      for (auto& h : result.history) h.best = false;
      m.best = true;
    }
    std::ostringstream line;
    line.precision(4);
    line << std::fixed << "epoch " << epoch << ": loss " << m.train_loss << " train acc " << m.train_accuracy;
    if (m.val_weighted_f1) line << " val F1 " << *m.val_weighted_f1;
    log::info(line.str());
    result.history.push_back(m);
    if (options.on_epoch) options.on_epoch(m);
  }

  if (!best_state.empty()) restore(model, best_state);
  if (options.checkpoint_path) {
    save_checkpoint(model, *options.checkpoint_path);
    result.checkpoint = options.checkpoint_path;
  }
  model->eval();
  return result;
}

std::string history_to_json(const TrainResult& r) {
  using nlohmann::json;
  json epochs = json::array();
  for (const auto& m : r.history) {
    json e = {{"epoch", m.epoch},       {"train_loss", m.train_loss}, {"train_accuracy", m.train_accuracy},
              {"steps", m.steps},       {"best", m.best}};
    e["val_weighted_f1"] = m.val_weighted_f1 ? json(*m.val_weighted_f1) : json(nullptr);
    e["val_top1"] = m.val_top1 ? json(*m.val_top1) : json(nullptr);
    epochs.push_back(e);
  }
  json out = {{"epochs", epochs}, {"best_epoch", r.best_epoch}, {"step_losses", r.step_losses}};
  out["best_val_weighted_f1"] = r.best_val_f1 ? json(*r.best_val_f1) : json(nullptr);
  out["checkpoint"] = r.checkpoint ? json(r.checkpoint->string()) : json(nullptr);
  return out.dump(2);
}

}  // namespace rehab::model
