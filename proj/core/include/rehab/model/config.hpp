#pragma once

#include "rehab/catalog.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace rehab::model {

enum class Variant { full, no_skeleton, mlp_skeleton_encoder, mlp_guided_fuse };

std::string to_string(Variant variant);
/// Throws ConfigError for unknown names.
Variant variant_from_string(const std::string& name);
const std::vector<Variant>& all_variants();

struct ModelConfig {
  Variant variant = Variant::full;
  std::int64_t embed_dim = 64;  // D
  std::int64_t image_size = 32;
  std::int64_t patch_size = 8;
  std::int64_t vision_layers = 2;
  std::int64_t vision_heads = 8;
  std::int64_t num_frames = 10;
  std::int64_t skeleton_dim = 17;
  std::int64_t lstm_hidden = 32;  // per direction
  std::int64_t guided_layers = 2;
  std::int64_t guided_heads = 8;
  std::int64_t motion_layers = 2;
  std::int64_t motion_heads = 8;
  std::int64_t max_frames = 64;
  std::int64_t prompt_length = 4;  // L_p
  std::int64_t text_context = 77;
  std::int64_t text_vocab = 8192;
  std::int64_t text_layers = 2;
  std::int64_t text_heads = 8;
  std::int64_t num_classes = 16;
  double tau_init = std::log(1.0 / 0.07);
  double max_logit_scale = 100.0;
  bool freeze_vision = true;
  std::string vision_weights;  // optional serialized encoder weights
  std::string text_weights;

  bool uses_skeleton() const noexcept { return variant != Variant::no_skeleton; }
  /// Throws ConfigError on inconsistent sizes.
  void validate() const;
};

std::string config_to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
ModelConfig config_from_json(const std::string& text);

struct TrainConfig {
  std::int64_t epochs = 10;
  std::int64_t batch_size = 8;
  double lr = 1e-4;
  double weight_decay = 0.01;
  std::int64_t warmup_steps = 0;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  /// Stops after this many optimizer steps when positive.
  std::int64_t max_steps = 0;
};

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

inline constexpr std::int64_t kPadToken = 0;
inline constexpr std::int64_t kStartToken = 1;
inline constexpr std::int64_t kEndToken = 2;

/// Word-hashed token ids for every class text, each wrapped in start/end
/// tokens and padded to the longest text.
struct ClassTokens {
  std::vector<std::vector<std::int64_t>> ids;  // num_classes rows, equal length
  std::vector<std::int64_t> end_index;         // position of the end token per row
};

/// Throws ConfigError for a missing class and ValidationError naming the
/// class when its text does not fit the context next to the prompt tokens.
ClassTokens tokenize_classes(const ClassCatalog& catalog, const ModelConfig& config);

}  // namespace rehab::model
