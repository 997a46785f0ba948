#pragma once

#include "rehab/dataset_builder.hpp"
#include "rehab/media.hpp"
#include "rehab/model/config.hpp"
#include "rehab/pose_features.hpp"
#include "rehab/segmenter.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rehab::model {

struct ClipExample {
  torch::Tensor frames;    // N_f x 3 x H x W, normalized
  torch::Tensor skeleton;  // N_f x 17
  std::int64_t label = 0;
  std::string video_id;
  std::int64_t start_frame = 0;
};

struct ClipBatch {
  torch::Tensor frames;    // B x N_f x 3 x H x W
  torch::Tensor skeleton;  // B x N_f x 17
  torch::Tensor labels;    // B, int64

  std::int64_t size() const { return frames.defined() ? frames.size(0) : 0; }
  /// Throws ValidationError on shape mismatches or non-finite values.
  void validate(const ModelConfig& config) const;
};

/// RGB image -> 3 x S x S float tensor, resized and normalized with the
/// usual contrastive-pretraining channel statistics.
torch::Tensor image_to_tensor(const media::Image& image, std::int64_t size);

ClipBatch collate(std::span<const ClipExample> examples);
ClipBatch collate(std::span<const ClipExample> examples, std::span<const std::size_t> order);
/// Batch from segmenter window inputs (labels zero).
ClipBatch batch_from_windows(std::span<const segment::WindowInput> windows, std::int64_t image_size);

class ClipProvider {
 public:
  virtual ~ClipProvider() = default;
  virtual std::size_t size() const = 0;
  virtual const ClipExample& at(std::size_t i) const = 0;
};

class MemoryClipProvider final : public ClipProvider {
 public:
  MemoryClipProvider() = default;
  explicit MemoryClipProvider(std::vector<ClipExample> examples) : examples_(std::move(examples)) {}
  std::size_t size() const override { return examples_.size(); }
  const ClipExample& at(std::size_t i) const override { return examples_.at(i); }
  void add(ClipExample example) { examples_.push_back(std::move(example)); }
  const std::vector<ClipExample>& examples() const noexcept { return examples_; }

 private:
  std::vector<ClipExample> examples_;
};

/// Where the raw media for a dataset lives: `<video_dir>/<video_id>.<ext>`
/// and `<pose_dir>/<video_id>.jsonl`.
struct MediaLayout {
  std::filesystem::path video_dir;
  std::filesystem::path pose_dir;
  pose::KeypointLayout keypoints = pose::KeypointLayout::openpose_body25();
};

/// Decodes every window sample of `split`. Throws NotFoundError for missing
/// videos and DependencyError for missing pose streams.
MemoryClipProvider load_split(const dataset::Dataset& dataset, dataset::Split split, const MediaLayout& media,
                              std::int64_t image_size);

/// Synthetic clips: each class has its own solid frame colour and its own
/// periodic skeleton motion, plus seeded noise. Labels are 0..classes-1.
MemoryClipProvider synthetic_clips(std::int64_t classes, std::int64_t per_class, const ModelConfig& config,
                                   std::uint64_t seed);

}  // namespace rehab::model
