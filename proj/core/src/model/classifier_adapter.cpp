#include "rehab/model/classifier_adapter.hpp"

#include "rehab/model/clip_provider.hpp"

namespace rehab::model {

RecognizerClassifier::RecognizerClassifier(Recognizer model) : model_(std::move(model)) { model_->eval(); }

std::vector<std::vector<double>> RecognizerClassifier::predict_proba(std::span<const segment::WindowInput> windows) {
  if (windows.empty()) return {};
  std::lock_guard lock(mutex_);
  torch::NoGradGuard guard;
  const auto batch = batch_from_windows(windows, model_->config().image_size);
  batch.validate(model_->config());
  const auto probs = torch::softmax(model_->forward(batch.frames, batch.skeleton), 1).to(torch::kDouble).contiguous();
  std::vector<std::vector<double>> out;
  const auto cols = probs.size(1);
  const double* p = probs.data_ptr<double>();
  for (std::int64_t r = 0; r < probs.size(0); ++r) out.emplace_back(p + r * cols, p + (r + 1) * cols);
  return out;
}

media::ResizeTo RecognizerClassifier::input_size() const {
  const auto s = static_cast<int>(model_->config().image_size);
  return {s, s};
}

std::string RecognizerClassifier::fingerprint() const {
  return "recognizer:" + to_string(model_->config().variant) + ":" + model_->class_hash();
}

}  // namespace rehab::model
