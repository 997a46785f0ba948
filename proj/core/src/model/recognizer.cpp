#include "rehab/model/recognizer.hpp"

#include "rehab/error.hpp"

#include <cmath>

namespace rehab::model {

namespace {

constexpr const char* kConfigKey = "rehab.config";
constexpr const char* kClassHashKey = "rehab.class_hash";

bool is_skeleton_parameter(const std::string& name) {
  return name.rfind("skeleton_encoder.", 0) == 0 || name.rfind("spatial_fuse.", 0) == 0;
}

}  // namespace

RecognizerImpl::RecognizerImpl(ModelConfig config, const ClassTokens& tokens, std::string class_hash)
    : config_(std::move(config)), class_hash_(std::move(class_hash)) {
  config_.validate();
  if (static_cast<std::int64_t>(tokens.ids.size()) != config_.num_classes) {
    throw ConfigError("class token table has " + std::to_string(tokens.ids.size()) + " rows, expected " +
                      std::to_string(config_.num_classes));
  }
  vision_ = register_module("vision", VisionEncoder(config_));
  switch (config_.variant) {
    case Variant::full:
      lstm_encoder_ = register_module("skeleton_encoder", SkeletonEncoder(config_));
      guided_ = register_module("spatial_fuse", GuidedSpatialTransformer(config_));
      break;
    case Variant::mlp_skeleton_encoder:
      mlp_encoder_ = register_module("skeleton_encoder", MlpSkeletonEncoder(config_));
      guided_ = register_module("spatial_fuse", GuidedSpatialTransformer(config_));
      break;
    case Variant::mlp_guided_fuse:
      lstm_encoder_ = register_module("skeleton_encoder", SkeletonEncoder(config_));
      concat_fuse_ = register_module("spatial_fuse", ConcatFuse(config_));
      break;
    case Variant::no_skeleton:
      break;
  }
  motion_ = register_module("motion", MotionTransformer(config_));
  adapter_ = register_module("motion_adapter", MotionAdapter(config_));
  text_ = register_module("text", TextEncoder(config_));
  cross_ = register_module("cross_modal", CrossModal(config_));
  tau_ = register_parameter("tau", torch::full({}, config_.tau_init));

  const auto rows = static_cast<std::int64_t>(tokens.ids.size());
  const auto cols = static_cast<std::int64_t>(tokens.ids.front().size());
  auto ids = torch::empty({rows, cols}, torch::kLong);
  auto acc = ids.accessor<std::int64_t, 2>();
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) acc[r][c] = tokens.ids[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  class_ids_ = register_buffer("class_ids", ids);
  class_end_ = register_buffer("class_end", torch::tensor(tokens.end_index, torch::kLong));

  if (!config_.vision_weights.empty()) {
    torch::serialize::InputArchive in;
    in.load_from(config_.vision_weights);
    vision_->load(in);
  }
  if (!config_.text_weights.empty()) {
    torch::serialize::InputArchive in;
    in.load_from(config_.text_weights);
    text_->load(in);
  }
  set_vision_frozen(config_.freeze_vision);
}

torch::Tensor RecognizerImpl::encode_frames(const torch::Tensor& frames) {
  if (config_.freeze_vision) {
    torch::NoGradGuard guard;
    return vision_(frames);
  }
  return vision_(frames);
}

torch::Tensor RecognizerImpl::encode_skeleton(const torch::Tensor& skeleton) {
  if (lstm_encoder_) return lstm_encoder_(skeleton);
  if (mlp_encoder_) return mlp_encoder_(skeleton);
  throw ConfigError("the no_skeleton variant has no skeleton encoder");
}

torch::Tensor RecognizerImpl::guided_spatial_fuse(const torch::Tensor& v_seq, const torch::Tensor& k_s) {
  if (guided_) return guided_(v_seq, k_s);
  if (concat_fuse_) return concat_fuse_(v_seq, k_s);
  throw ConfigError("the no_skeleton variant has no spatial fusion stage");
}

torch::Tensor RecognizerImpl::motion_encode(const torch::Tensor& v_seq) { return motion_(v_seq); }

torch::Tensor RecognizerImpl::motion_prompt(const torch::Tensor& t_m) { return adapter_(t_m); }

torch::Tensor RecognizerImpl::encode_class_texts(const torch::Tensor& p_m) {
  return text_(p_m, class_ids_, class_end_);
}

std::pair<torch::Tensor, torch::Tensor> RecognizerImpl::cross_modal_enhance(const torch::Tensor& v,
                                                                            const torch::Tensor& t) {
  return cross_(v, t);
}

torch::Tensor RecognizerImpl::classify(const torch::Tensor& v_prime, const torch::Tensor& t_prime) {
  return cosine_logits(v_prime, t_prime, tau_);
}

StreamFeatures RecognizerImpl::streams(const torch::Tensor& frames, const torch::Tensor& skeleton) {
  StreamFeatures s;
  s.v_seq = encode_frames(frames);
  if (config_.uses_skeleton()) {
    if (!skeleton.defined() || skeleton.dim() != 3 || skeleton.size(0) != frames.size(0) ||
        skeleton.size(1) != frames.size(1)) {
      throw ValidationError("skeleton", "skeleton batch must be B x N_f x " + std::to_string(config_.skeleton_dim) +
                                            " matching the frames");
    }
    s.k_s = encode_skeleton(skeleton);
    s.t_s = guided_spatial_fuse(s.v_seq, s.k_s);
  } else {
    s.t_s = s.v_seq;
  }
  s.t_m = motion_encode(s.v_seq);
  s.v = fuse_streams(s.t_s, s.t_m);
  return s;
}

torch::Tensor RecognizerImpl::forward(const torch::Tensor& frames, const torch::Tensor& skeleton) {
  const auto s = streams(frames, skeleton);
  const auto p_m = motion_prompt(s.t_m);
  const auto t = encode_class_texts(p_m);
  const auto [v_prime, t_prime] = cross_modal_enhance(s.v, t);
  return classify(v_prime, t_prime);
}

void RecognizerImpl::clamp_temperature() {
  torch::NoGradGuard guard;
  tau_.clamp_max_(std::log(config_.max_logit_scale));
}

void RecognizerImpl::set_vision_frozen(bool frozen) {
  config_.freeze_vision = frozen;
  for (auto& p : vision_->parameters()) p.set_requires_grad(!frozen);
}

std::int64_t RecognizerImpl::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

std::int64_t RecognizerImpl::trainable_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) {
    if (p.requires_grad()) n += p.numel();
  }
  return n;
}

std::int64_t RecognizerImpl::skeleton_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& item : named_parameters()) {
    if (is_skeleton_parameter(item.key())) n += item.value().numel();
  }
  return n;
}

Recognizer make_recognizer(const ModelConfig& config, const ClassCatalog& catalog, std::uint64_t seed) {
  torch::manual_seed(seed);
  return Recognizer(config, tokenize_classes(catalog, config), catalog.content_hash());
}

void save_checkpoint(Recognizer& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  torch::serialize::OutputArchive out;
  out.write(kConfigKey, c10::IValue(config_to_json(model->config())));
  out.write(kClassHashKey, c10::IValue(model->class_hash()));
  model->save(out);
  const auto tmp = path.string() + ".tmp";
  out.save_to(tmp);
  std::filesystem::rename(tmp, path);
}

namespace {

std::string read_string(torch::serialize::InputArchive& in, const char* key, const std::filesystem::path& path) {
  c10::IValue v;
  if (!in.try_read(key, v) || !v.isString()) {
    throw ConfigError("'" + path.string() + "' is not a recognizer checkpoint (missing " + key + ")");
  }
  return v.toStringRef();
}

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFoundError("checkpoint '" + path.string() + "' not found");
  torch::serialize::InputArchive in;
  try {
    in.load_from(path.string());
  } catch (const c10::Error& e) {
    throw ConfigError("cannot read checkpoint '" + path.string() + "': " + e.what_without_backtrace());
  }
  return in;
}

}  // namespace

ModelConfig checkpoint_config(const std::filesystem::path& path) {
  auto in = open_archive(path);
  return config_from_json(read_string(in, kConfigKey, path));
}

Recognizer load_checkpoint(const std::filesystem::path& path, const ClassCatalog& catalog) {
  auto in = open_archive(path);
  auto config = config_from_json(read_string(in, kConfigKey, path));
  const auto hash = read_string(in, kClassHashKey, path);
  if (hash != catalog.content_hash()) {
    throw ConfigError("checkpoint '" + path.string() + "' was trained with class texts " + hash +
                      " but the catalog hashes to " + catalog.content_hash());
  }
  // Weights come from the checkpoint, not from the original weight files.
  config.vision_weights.clear();
  config.text_weights.clear();
  Recognizer model(config, tokenize_classes(catalog, config), hash);
  model->load(in);
  model->eval();
  return model;
}

}  // namespace rehab::model
