#pragma once

#include "rehab/model/config.hpp"

#include <torch/torch.h>

#include <utility>

namespace rehab::model {

/// Batch-first multi-head attention. `mask` is additive, shape (Lq, Lk).
struct AttentionImpl : torch::nn::Module {
  AttentionImpl(std::int64_t dim, std::int64_t heads);
  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& key_value,
                        const torch::Tensor& mask = {});

  std::int64_t heads;
  std::int64_t head_dim;
  torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};
};
TORCH_MODULE(Attention);

struct MlpImpl : torch::nn::Module {
  MlpImpl(std::int64_t in, std::int64_t hidden, std::int64_t out);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(Mlp);

/// Pre-norm transformer encoder layer.
struct EncoderBlockImpl : torch::nn::Module {
  EncoderBlockImpl(std::int64_t dim, std::int64_t heads);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask = {});

  torch::nn::LayerNorm ln1{nullptr}, ln2{nullptr};
  Attention attn{nullptr};
  Mlp mlp{nullptr};
};
TORCH_MODULE(EncoderBlock);

/// Pre-norm transformer decoder layer: self-attention over the queries, then
/// attention from the queries into `memory`.
struct DecoderBlockImpl : torch::nn::Module {
  DecoderBlockImpl(std::int64_t dim, std::int64_t heads);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& memory);

  torch::nn::LayerNorm ln1{nullptr}, ln2{nullptr}, ln_memory{nullptr}, ln3{nullptr};
  Attention self_attn{nullptr}, cross_attn{nullptr};
  Mlp mlp{nullptr};
};
TORCH_MODULE(DecoderBlock);

/// Patch-embedding transformer over single frames; the class token output,
/// projected to D, is the frame feature. Input B x N_f x 3 x H x W.
struct VisionEncoderImpl : torch::nn::Module {
  explicit VisionEncoderImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& frames);

  std::int64_t image_size;
  torch::nn::Conv2d patch_embed{nullptr};
  torch::Tensor class_token, position;
  torch::nn::LayerNorm ln_pre{nullptr}, ln_post{nullptr};
  torch::nn::ModuleList blocks;
  torch::nn::Linear proj{nullptr};
};
TORCH_MODULE(VisionEncoder);

/// Bidirectional LSTM over the skeleton rows; both directions projected to D.
struct SkeletonEncoderImpl : torch::nn::Module {
  explicit SkeletonEncoderImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& skeleton);

  std::int64_t input_dim;
  torch::nn::LSTM lstm{nullptr};
  torch::nn::Linear proj{nullptr};
};
TORCH_MODULE(SkeletonEncoder);

/// Per-frame single-hidden-layer mapper 17 -> 2*lstm_hidden -> D.
struct MlpSkeletonEncoderImpl : torch::nn::Module {
  explicit MlpSkeletonEncoderImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& skeleton);

  std::int64_t input_dim;
  Mlp mlp{nullptr};
};
TORCH_MODULE(MlpSkeletonEncoder);

/// Decoder stack with frame features as queries and skeleton embeddings as
/// keys and values.
struct GuidedSpatialTransformerImpl : torch::nn::Module {
  explicit GuidedSpatialTransformerImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& v_seq, const torch::Tensor& k_s);

  torch::Tensor position;
  torch::nn::ModuleList blocks;
  torch::nn::LayerNorm ln{nullptr};
};
TORCH_MODULE(GuidedSpatialTransformer);

/// Per-frame mapper over [V_seq ; K_s], hidden width D.
struct ConcatFuseImpl : torch::nn::Module {
  explicit ConcatFuseImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& v_seq, const torch::Tensor& k_s);

  Mlp mlp{nullptr};
};
TORCH_MODULE(ConcatFuse);

/// V_seq[:, t+1] - V_seq[:, t]; throws ValidationError when N_f < 2.
torch::Tensor motion_differences(const torch::Tensor& v_seq);

/// Transformer encoder over consecutive frame-feature differences.
struct MotionTransformerImpl : torch::nn::Module {
  explicit MotionTransformerImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& v_seq);

  torch::Tensor position;
  torch::nn::ModuleList blocks;
  torch::nn::LayerNorm ln{nullptr};
};
TORCH_MODULE(MotionTransformer);

/// Mean over time of both streams, summed: B x 1 x D.
torch::Tensor fuse_streams(const torch::Tensor& t_s, const torch::Tensor& t_m);

/// Pooled motion features to L_p prompt tokens.
struct MotionAdapterImpl : torch::nn::Module {
  explicit MotionAdapterImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& t_m);

  std::int64_t prompt_length, dim;
  Mlp mlp{nullptr};
};
TORCH_MODULE(MotionAdapter);

/// Causal text transformer run on [P_m ; E_text(c)] for every class; the
/// output at each class's end token, projected, is its feature.
struct TextEncoderImpl : torch::nn::Module {
  explicit TextEncoderImpl(const ModelConfig& config);
  /// prompt B x L_p x D, ids C x L, end_index C -> B x C x D.
  torch::Tensor forward(const torch::Tensor& prompt, const torch::Tensor& ids, const torch::Tensor& end_index);

  std::int64_t context;
  torch::nn::Embedding token_embedding{nullptr};
  torch::Tensor position;
  torch::nn::ModuleList blocks;
  torch::nn::LayerNorm ln_final{nullptr};
  torch::nn::Linear proj{nullptr};
};
TORCH_MODULE(TextEncoder);

/// Two cross-attention branches computed from the same inputs:
/// T' = LN(T + Attn(T, V)), V' = LN(V + Attn(V, T)).
struct CrossModalImpl : torch::nn::Module {
  explicit CrossModalImpl(const ModelConfig& config);
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& v, const torch::Tensor& t);

  Attention text_from_video{nullptr}, video_from_text{nullptr};
  torch::nn::LayerNorm ln_text{nullptr}, ln_video{nullptr};
};
TORCH_MODULE(CrossModal);

inline constexpr double kCosineEps = 1e-8;

/// logits[b, c] = exp(tau) * cos(V'[b], T'[b, c]), norms floored at eps.
/// v: B x 1 x D (or B x D), t: B x C x D.
torch::Tensor cosine_logits(const torch::Tensor& v, const torch::Tensor& t, const torch::Tensor& tau,
                            double eps = kCosineEps);

}  // namespace rehab::model
