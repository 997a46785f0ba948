#include "rehab/model/modules.hpp"

#include "rehab/error.hpp"

#include <cmath>

namespace rehab::model {

namespace nn = torch::nn;

namespace {

std::string shape_of(const torch::Tensor& t) {
  std::string s = "(";
  for (std::int64_t i = 0; i < t.dim(); ++i) s += (i ? "," : "") + std::to_string(t.size(i));
  return s + ")";
}

void expect_dims(const torch::Tensor& t, std::int64_t dims, const char* field) {
  if (!t.defined() || t.dim() != dims) {
    throw ValidationError(field, "expected a " + std::to_string(dims) + "-d tensor, got " +
                                     (t.defined() ? shape_of(t) : std::string("undefined")));
  }
}

torch::Tensor learned_position(nn::Module& m, const char* name, std::int64_t length, std::int64_t dim) {
  return m.register_parameter(name, torch::randn({length, dim}) * 0.02);
}

}  // namespace

AttentionImpl::AttentionImpl(std::int64_t dim, std::int64_t heads_)
    : heads(heads_), head_dim(dim / heads_) {
  q_proj = register_module("q_proj", nn::Linear(dim, dim));
  k_proj = register_module("k_proj", nn::Linear(dim, dim));
  v_proj = register_module("v_proj", nn::Linear(dim, dim));
  out_proj = register_module("out_proj", nn::Linear(dim, dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& key_value,
                                     const torch::Tensor& mask) {
  const auto b = query.size(0);
  const auto lq = query.size(1);
  const auto lk = key_value.size(1);
  auto split = [&](const torch::Tensor& x, std::int64_t len) {
    return x.view({b, len, heads, head_dim}).transpose(1, 2);
  };
  auto q = split(q_proj(query), lq);
  auto k = split(k_proj(key_value), lk);
  auto v = split(v_proj(key_value), lk);
  auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim));
  if (mask.defined()) scores = scores + mask;
  auto out = torch::matmul(torch::softmax(scores, -1), v);
  return out_proj(out.transpose(1, 2).reshape({b, lq, heads * head_dim}));
}

MlpImpl::MlpImpl(std::int64_t in, std::int64_t hidden, std::int64_t out) {
  fc1 = register_module("fc1", nn::Linear(in, hidden));
  fc2 = register_module("fc2", nn::Linear(hidden, out));
}

torch::Tensor MlpImpl::forward(const torch::Tensor& x) { return fc2(torch::gelu(fc1(x))); }

EncoderBlockImpl::EncoderBlockImpl(std::int64_t dim, std::int64_t heads) {
  ln1 = register_module("ln1", nn::LayerNorm(nn::LayerNormOptions({dim})));
  attn = register_module("attn", Attention(dim, heads));
  ln2 = register_module("ln2", nn::LayerNorm(nn::LayerNormOptions({dim})));
  mlp = register_module("mlp", Mlp(dim, 4 * dim, dim));
}

torch::Tensor EncoderBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  auto h = ln1(x);
  auto y = x + attn(h, h, mask);
  return y + mlp(ln2(y));
}

DecoderBlockImpl::DecoderBlockImpl(std::int64_t dim, std::int64_t heads) {
  ln1 = register_module("ln1", nn::LayerNorm(nn::LayerNormOptions({dim})));
  self_attn = register_module("self_attn", Attention(dim, heads));
  ln2 = register_module("ln2", nn::LayerNorm(nn::LayerNormOptions({dim})));
  ln_memory = register_module("ln_memory", nn::LayerNorm(nn::LayerNormOptions({dim})));
  cross_attn = register_module("cross_attn", Attention(dim, heads));
  ln3 = register_module("ln3", nn::LayerNorm(nn::LayerNormOptions({dim})));
  mlp = register_module("mlp", Mlp(dim, 4 * dim, dim));
}

torch::Tensor DecoderBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& memory) {
  auto h = ln1(x);
  auto y = x + self_attn(h, h);
  y = y + cross_attn(ln2(y), ln_memory(memory));
  return y + mlp(ln3(y));
}

VisionEncoderImpl::VisionEncoderImpl(const ModelConfig& c) : image_size(c.image_size) {
  const auto d = c.embed_dim;
  const auto patches = (c.image_size / c.patch_size) * (c.image_size / c.patch_size);
  patch_embed = register_module(
      "patch_embed", nn::Conv2d(nn::Conv2dOptions(3, d, c.patch_size).stride(c.patch_size).bias(false)));
  class_token = register_parameter("class_token", torch::randn({d}) * 0.02);
  position = learned_position(*this, "position", patches + 1, d);
  ln_pre = register_module("ln_pre", nn::LayerNorm(nn::LayerNormOptions({d})));
  for (std::int64_t i = 0; i < c.vision_layers; ++i) blocks->push_back(EncoderBlock(d, c.vision_heads));
  register_module("blocks", blocks);
  ln_post = register_module("ln_post", nn::LayerNorm(nn::LayerNormOptions({d})));
  proj = register_module("proj", nn::Linear(nn::LinearOptions(d, d).bias(false)));
}

torch::Tensor VisionEncoderImpl::forward(const torch::Tensor& frames) {
  expect_dims(frames, 5, "frames");
  if (frames.size(2) != 3 || frames.size(3) != image_size || frames.size(4) != image_size) {
    throw ValidationError("frames", "expected B x N_f x 3 x " + std::to_string(image_size) + " x " +
                                        std::to_string(image_size) + ", got " + shape_of(frames));
  }
  const auto b = frames.size(0);
  const auto n = frames.size(1);
  auto x = patch_embed(frames.reshape({b * n, 3, image_size, image_size}));  // BN x D x h x w
  x = x.flatten(2).transpose(1, 2);                                           // BN x P x D
  auto cls = class_token.expand({b * n, 1, x.size(2)});
  x = ln_pre(torch::cat({cls, x}, 1) + position);
  for (auto& blk : *blocks) x = blk->as<EncoderBlock>()->forward(x);
  x = proj(ln_post(x.select(1, 0)));
  return x.view({b, n, -1});
}

SkeletonEncoderImpl::SkeletonEncoderImpl(const ModelConfig& c) : input_dim(c.skeleton_dim) {
  lstm = register_module(
      "lstm", nn::LSTM(nn::LSTMOptions(c.skeleton_dim, c.lstm_hidden).batch_first(true).bidirectional(true)));
  proj = register_module("proj", nn::Linear(2 * c.lstm_hidden, c.embed_dim));
}

torch::Tensor SkeletonEncoderImpl::forward(const torch::Tensor& skeleton) {
  expect_dims(skeleton, 3, "skeleton");
  if (skeleton.size(2) != input_dim) {
    throw ValidationError("skeleton", "expected rows of length " + std::to_string(input_dim) + ", got " +
                                          shape_of(skeleton));
  }
  auto out = std::get<0>(lstm(skeleton));
  return proj(out);
}

MlpSkeletonEncoderImpl::MlpSkeletonEncoderImpl(const ModelConfig& c) : input_dim(c.skeleton_dim) {
  mlp = register_module("mlp", Mlp(c.skeleton_dim, 2 * c.lstm_hidden, c.embed_dim));
}

torch::Tensor MlpSkeletonEncoderImpl::forward(const torch::Tensor& skeleton) {
  expect_dims(skeleton, 3, "skeleton");
  if (skeleton.size(2) != input_dim) {
    throw ValidationError("skeleton", "expected rows of length " + std::to_string(input_dim) + ", got " +
                                          shape_of(skeleton));
  }
  return mlp(skeleton);
}

namespace {

void check_streams(const torch::Tensor& v_seq, const torch::Tensor& k_s) {
  expect_dims(v_seq, 3, "V_seq");
  expect_dims(k_s, 3, "K_s");
  if (v_seq.size(0) != k_s.size(0) || v_seq.size(1) != k_s.size(1) || v_seq.size(2) != k_s.size(2)) {
    throw ValidationError("K_s", "frame and skeleton streams differ: " + shape_of(v_seq) + " vs " + shape_of(k_s));
  }
}

}  // namespace

GuidedSpatialTransformerImpl::GuidedSpatialTransformerImpl(const ModelConfig& c) {
  position = learned_position(*this, "position", c.max_frames, c.embed_dim);
  for (std::int64_t i = 0; i < c.guided_layers; ++i) blocks->push_back(DecoderBlock(c.embed_dim, c.guided_heads));
  register_module("blocks", blocks);
  ln = register_module("ln", nn::LayerNorm(nn::LayerNormOptions({c.embed_dim})));
}

torch::Tensor GuidedSpatialTransformerImpl::forward(const torch::Tensor& v_seq, const torch::Tensor& k_s) {
  check_streams(v_seq, k_s);
  const auto n = v_seq.size(1);
  if (n > position.size(0)) throw ValidationError("V_seq", "more frames than max_frames");
  const auto pos = position.narrow(0, 0, n);
  auto x = v_seq + pos;
  const auto memory = k_s + pos;
  for (auto& blk : *blocks) x = blk->as<DecoderBlock>()->forward(x, memory);
  return ln(x);
}

ConcatFuseImpl::ConcatFuseImpl(const ModelConfig& c) {
  mlp = register_module("mlp", Mlp(2 * c.embed_dim, c.embed_dim, c.embed_dim));
}

torch::Tensor ConcatFuseImpl::forward(const torch::Tensor& v_seq, const torch::Tensor& k_s) {
  check_streams(v_seq, k_s);
  return mlp(torch::cat({v_seq, k_s}, -1));
}

torch::Tensor motion_differences(const torch::Tensor& v_seq) {
  expect_dims(v_seq, 3, "V_seq");
  if (v_seq.size(1) < 2) {
    throw ValidationError("V_seq", "motion features need at least 2 frames, got " + std::to_string(v_seq.size(1)));
  }
  const auto n = v_seq.size(1);
  return v_seq.narrow(1, 1, n - 1) - v_seq.narrow(1, 0, n - 1);
}

MotionTransformerImpl::MotionTransformerImpl(const ModelConfig& c) {
  position = learned_position(*this, "position", c.max_frames, c.embed_dim);
  for (std::int64_t i = 0; i < c.motion_layers; ++i) blocks->push_back(EncoderBlock(c.embed_dim, c.motion_heads));
  register_module("blocks", blocks);
  ln = register_module("ln", nn::LayerNorm(nn::LayerNormOptions({c.embed_dim})));
}

torch::Tensor MotionTransformerImpl::forward(const torch::Tensor& v_seq) {
  auto x = motion_differences(v_seq);
  if (x.size(1) > position.size(0)) throw ValidationError("V_seq", "more frames than max_frames");
  x = x + position.narrow(0, 0, x.size(1));
  for (auto& blk : *blocks) x = blk->as<EncoderBlock>()->forward(x);
  return ln(x);
}

torch::Tensor fuse_streams(const torch::Tensor& t_s, const torch::Tensor& t_m) {
  expect_dims(t_s, 3, "T_s");
  expect_dims(t_m, 3, "T_m");
  if (t_s.size(0) != t_m.size(0) || t_s.size(2) != t_m.size(2)) {
    throw ValidationError("T_m", "stream shapes disagree: " + shape_of(t_s) + " vs " + shape_of(t_m));
  }
  return t_s.mean(1, true) + t_m.mean(1, true);
}

MotionAdapterImpl::MotionAdapterImpl(const ModelConfig& c) : prompt_length(c.prompt_length), dim(c.embed_dim) {
  mlp = register_module("mlp", Mlp(c.embed_dim, c.embed_dim, c.prompt_length * c.embed_dim));
}

torch::Tensor MotionAdapterImpl::forward(const torch::Tensor& t_m) {
  expect_dims(t_m, 3, "T_m");
  if (t_m.size(2) != dim) throw ValidationError("T_m", "expected width " + std::to_string(dim));
  return mlp(t_m.mean(1)).view({t_m.size(0), prompt_length, dim});
}

TextEncoderImpl::TextEncoderImpl(const ModelConfig& c) : context(c.text_context) {
  token_embedding = register_module("token_embedding", nn::Embedding(c.text_vocab, c.embed_dim));
  nn::init::normal_(token_embedding->weight, 0.0, 0.02);
  position = learned_position(*this, "position", c.text_context, c.embed_dim);
  for (std::int64_t i = 0; i < c.text_layers; ++i) blocks->push_back(EncoderBlock(c.embed_dim, c.text_heads));
  register_module("blocks", blocks);
  ln_final = register_module("ln_final", nn::LayerNorm(nn::LayerNormOptions({c.embed_dim})));
  proj = register_module("proj", nn::Linear(nn::LinearOptions(c.embed_dim, c.embed_dim).bias(false)));
}

torch::Tensor TextEncoderImpl::forward(const torch::Tensor& prompt, const torch::Tensor& ids,
                                       const torch::Tensor& end_index) {
  expect_dims(prompt, 3, "P_m");
  const auto b = prompt.size(0);
  const auto lp = prompt.size(1);
  const auto d = prompt.size(2);
  const auto c = ids.size(0);
  const auto lt = ids.size(1);
  const auto len = lp + lt;
  if (len > context) throw ValidationError("class_descriptions", "prompt plus text exceeds the context window");

  auto text = token_embedding(ids);                                       // C x Lt x D
  auto x = torch::cat({prompt.unsqueeze(1).expand({b, c, lp, d}), text.unsqueeze(0).expand({b, c, lt, d})}, 2)
               .reshape({b * c, len, d});
  x = x + position.narrow(0, 0, len);
  const auto mask =
      torch::full({len, len}, -std::numeric_limits<float>::infinity(), x.options()).triu(1);
  for (auto& blk : *blocks) x = blk->as<EncoderBlock>()->forward(x, mask);
  x = ln_final(x).view({b, c, len, d});
  const auto gather = (end_index + lp).view({1, c, 1, 1}).expand({b, c, 1, d});
  return proj(x.gather(2, gather).squeeze(2));
}

CrossModalImpl::CrossModalImpl(const ModelConfig& c) {
  text_from_video = register_module("text_from_video", Attention(c.embed_dim, c.text_heads));
  video_from_text = register_module("video_from_text", Attention(c.embed_dim, c.text_heads));
  ln_text = register_module("ln_text", nn::LayerNorm(nn::LayerNormOptions({c.embed_dim})));
  ln_video = register_module("ln_video", nn::LayerNorm(nn::LayerNormOptions({c.embed_dim})));
}

std::pair<torch::Tensor, torch::Tensor> CrossModalImpl::forward(const torch::Tensor& v, const torch::Tensor& t) {
  expect_dims(v, 3, "V");
  expect_dims(t, 3, "T");
  if (v.size(0) != t.size(0) || v.size(2) != t.size(2)) {
    throw ValidationError("T", "video and text features disagree: " + shape_of(v) + " vs " + shape_of(t));
  }
  auto t_prime = ln_text(t + text_from_video(t, v));
  auto v_prime = ln_video(v + video_from_text(v, t));
  return {v_prime, t_prime};
}

torch::Tensor cosine_logits(const torch::Tensor& v, const torch::Tensor& t, const torch::Tensor& tau, double eps) {
  auto vv = v.dim() == 3 ? v.squeeze(1) : v;  // B x D
  expect_dims(vv, 2, "V'");
  expect_dims(t, 3, "T'");
  if (vv.size(0) != t.size(0) || vv.size(1) != t.size(2)) {
    throw ValidationError("T'", "video and text features disagree: " + shape_of(v) + " vs " + shape_of(t));
  }
  const auto vn = vv / vv.norm(2, -1, true).clamp_min(eps);
  const auto tn = t / t.norm(2, -1, true).clamp_min(eps);
  const auto cos = torch::bmm(tn, vn.unsqueeze(2)).squeeze(2);  // B x C
  return tau.exp() * cos;
}

}  // namespace rehab::model
