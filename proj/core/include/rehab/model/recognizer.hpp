#pragma once

#include "rehab/catalog.hpp"
#include "rehab/model/config.hpp"
#include "rehab/model/modules.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <string>

namespace rehab::model {

struct StreamFeatures {
  torch::Tensor v_seq;  // B x N_f x D
  torch::Tensor k_s;    // B x N_f x D, undefined without skeleton
  torch::Tensor t_s;    // B x N_f x D
  torch::Tensor t_m;    // B x (N_f - 1) x D
  torch::Tensor v;      // B x 1 x D
};

struct TextSide {
  torch::Tensor p_m;  // B x L_p x D
  torch::Tensor t;    // B x N_c x D
};

/// Dual-stream classifier: frame and skeleton streams fused by a guided
/// decoder, a motion stream over frame-feature differences, motion-prompted
/// class texts, parallel cross-attention and a cosine head.
class RecognizerImpl : public torch::nn::Module {
 public:
  RecognizerImpl(ModelConfig config, const ClassTokens& tokens, std::string class_hash);

  torch::Tensor encode_frames(const torch::Tensor& frames);
  torch::Tensor encode_skeleton(const torch::Tensor& skeleton);
  torch::Tensor guided_spatial_fuse(const torch::Tensor& v_seq, const torch::Tensor& k_s);
  torch::Tensor motion_encode(const torch::Tensor& v_seq);
  torch::Tensor motion_prompt(const torch::Tensor& t_m);
  torch::Tensor encode_class_texts(const torch::Tensor& p_m);
  std::pair<torch::Tensor, torch::Tensor> cross_modal_enhance(const torch::Tensor& v, const torch::Tensor& t);
  torch::Tensor classify(const torch::Tensor& v_prime, const torch::Tensor& t_prime);

  StreamFeatures streams(const torch::Tensor& frames, const torch::Tensor& skeleton);
  /// frames B x N_f x 3 x H x W, skeleton B x N_f x 17 -> logits B x N_c.
  torch::Tensor forward(const torch::Tensor& frames, const torch::Tensor& skeleton);

  const ModelConfig& config() const noexcept { return config_; }
  const std::string& class_hash() const noexcept { return class_hash_; }
  torch::Tensor& tau() noexcept { return tau_; }

  /// Keeps exp(tau) within the configured maximum.
  void clamp_temperature();
  void set_vision_frozen(bool frozen);

  std::int64_t parameter_count() const;
  std::int64_t trainable_parameter_count() const;
  /// Parameters of the skeleton encoder and the spatial fusion stage.
  std::int64_t skeleton_parameter_count() const;

 private:
  ModelConfig config_;
  std::string class_hash_;
  VisionEncoder vision_{nullptr};
  SkeletonEncoder lstm_encoder_{nullptr};
  MlpSkeletonEncoder mlp_encoder_{nullptr};
  GuidedSpatialTransformer guided_{nullptr};
  ConcatFuse concat_fuse_{nullptr};
  MotionTransformer motion_{nullptr};
  MotionAdapter adapter_{nullptr};
  TextEncoder text_{nullptr};
  CrossModal cross_{nullptr};
  torch::Tensor tau_;
  torch::Tensor class_ids_;
  torch::Tensor class_end_;
};
TORCH_MODULE(Recognizer);

/// Seeds the generator, then builds the model for `catalog`'s class texts.
Recognizer make_recognizer(const ModelConfig& config, const ClassCatalog& catalog, std::uint64_t seed = 0);

/// Writes config, class hash and weights.
void save_checkpoint(Recognizer& model, const std::filesystem::path& path);
/// Throws ConfigError when the checkpoint was trained on different class texts.
Recognizer load_checkpoint(const std::filesystem::path& path, const ClassCatalog& catalog);
/// Reads only the stored model config.
ModelConfig checkpoint_config(const std::filesystem::path& path);

}  // namespace rehab::model
