#pragma once

#include "rehab/model/recognizer.hpp"
#include "rehab/segmenter.hpp"

#include <mutex>

namespace rehab::model {

/// Exposes a trained recognizer as a segmenter window classifier.
class RecognizerClassifier final : public segment::WindowClassifier {
 public:
  explicit RecognizerClassifier(Recognizer model);
  std::vector<std::vector<double>> predict_proba(std::span<const segment::WindowInput> windows) override;
  media::ResizeTo input_size() const override;
  std::string fingerprint() const override;

 private:
  Recognizer model_;
  std::mutex mutex_;
};

}  // namespace rehab::model
