#include "rehab/model/config.hpp"

#include "rehab/error.hpp"
#include "rehab/tokenizer.hpp"

#include <json.hpp>

#include <algorithm>

namespace rehab::model {

using nlohmann::json;

namespace {

const std::vector<std::pair<Variant, std::string>>& variant_names() {
  static const std::vector<std::pair<Variant, std::string>> names = {
      {Variant::full, "full"},
      {Variant::no_skeleton, "no_skeleton"},
      {Variant::mlp_skeleton_encoder, "mlp_skeleton_encoder"},
      {Variant::mlp_guided_fuse, "mlp_guided_fuse"},
  };
  return names;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json parse_object(const std::string& text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  return j;
}

void reject_unknown(const json& j, const json& known, const char* what) {
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ConfigError(std::string("unknown ") + what + " key '" + k + "'");
  }
}

}  // namespace

std::string to_string(Variant variant) {
  for (const auto& [v, n] : variant_names()) {
    if (v == variant) return n;
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  for (const auto& [v, n] : variant_names()) {
    if (n == name) return v;
  }
  throw ConfigError("unknown model variant '" + name +
                    "' (expected full, no_skeleton, mlp_skeleton_encoder or mlp_guided_fuse)");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {Variant::full, Variant::no_skeleton, Variant::mlp_skeleton_encoder,
                                         Variant::mlp_guided_fuse};
  return v;
}

void ModelConfig::validate() const {
  auto positive = [](std::int64_t v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(embed_dim, "embed_dim");
  positive(image_size, "image_size");
  positive(patch_size, "patch_size");
  positive(num_frames, "num_frames");
  positive(lstm_hidden, "lstm_hidden");
  positive(prompt_length, "prompt_length");
  positive(text_vocab, "text_vocab");
  positive(num_classes, "num_classes");
  if (image_size % patch_size != 0) throw ConfigError("image_size must be a multiple of patch_size");
  for (auto [heads, name] : {std::pair{vision_heads, "vision_heads"}, std::pair{guided_heads, "guided_heads"},
                             std::pair{motion_heads, "motion_heads"}, std::pair{text_heads, "text_heads"}}) {
    if (heads <= 0 || embed_dim % heads != 0) {
      throw ConfigError(std::string(name) + " must divide embed_dim");
    }
  }
  if (num_frames < 2) throw ConfigError("num_frames must be at least 2 for motion features");
  if (max_frames < num_frames) throw ConfigError("max_frames must be at least num_frames");
  if (text_context <= prompt_length + 2) throw ConfigError("text_context too small for the prompt tokens");
  if (text_vocab <= kEndToken + 1) throw ConfigError("text_vocab too small");
  if (max_logit_scale <= 0.0) throw ConfigError("max_logit_scale must be positive");
}

std::string config_to_json(const ModelConfig& c) {
  json j = {{"variant", to_string(c.variant)},
            {"embed_dim", c.embed_dim},
            {"image_size", c.image_size},
            {"patch_size", c.patch_size},
            {"vision_layers", c.vision_layers},
            {"vision_heads", c.vision_heads},
            {"num_frames", c.num_frames},
            {"skeleton_dim", c.skeleton_dim},
            {"lstm_hidden", c.lstm_hidden},
            {"guided_layers", c.guided_layers},
            {"guided_heads", c.guided_heads},
            {"motion_layers", c.motion_layers},
            {"motion_heads", c.motion_heads},
            {"max_frames", c.max_frames},
            {"prompt_length", c.prompt_length},
            {"text_context", c.text_context},
            {"text_vocab", c.text_vocab},
            {"text_layers", c.text_layers},
            {"text_heads", c.text_heads},
            {"num_classes", c.num_classes},
            {"tau_init", c.tau_init},
            {"max_logit_scale", c.max_logit_scale},
            {"freeze_vision", c.freeze_vision},
            {"vision_weights", c.vision_weights},
            {"text_weights", c.text_weights}};
  return j.dump(2);
}

ModelConfig config_from_json(const std::string& text) {
  const json j = parse_object(text, "model config");
  reject_unknown(j, json::parse(config_to_json(ModelConfig{})), "model config");
  ModelConfig c;
  try {
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
    read(j, "embed_dim", c.embed_dim);
    read(j, "image_size", c.image_size);
    read(j, "patch_size", c.patch_size);
    read(j, "vision_layers", c.vision_layers);
    read(j, "vision_heads", c.vision_heads);
    read(j, "num_frames", c.num_frames);
    read(j, "skeleton_dim", c.skeleton_dim);
    read(j, "lstm_hidden", c.lstm_hidden);
    read(j, "guided_layers", c.guided_layers);
    read(j, "guided_heads", c.guided_heads);
    read(j, "motion_layers", c.motion_layers);
    read(j, "motion_heads", c.motion_heads);
    read(j, "max_frames", c.max_frames);
    read(j, "prompt_length", c.prompt_length);
    read(j, "text_context", c.text_context);
    read(j, "text_vocab", c.text_vocab);
    read(j, "text_layers", c.text_layers);
    read(j, "text_heads", c.text_heads);
    read(j, "num_classes", c.num_classes);
    read(j, "tau_init", c.tau_init);
    read(j, "max_logit_scale", c.max_logit_scale);
    read(j, "freeze_vision", c.freeze_vision);
    read(j, "vision_weights", c.vision_weights);
    read(j, "text_weights", c.text_weights);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j = {{"epochs", c.epochs},       {"batch_size", c.batch_size}, {"lr", c.lr},
            {"weight_decay", c.weight_decay}, {"warmup_steps", c.warmup_steps}, {"grad_clip", c.grad_clip},
            {"seed", c.seed},           {"max_steps", c.max_steps}};
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  const json j = parse_object(text, "training config");
  reject_unknown(j, json::parse(train_config_to_json(TrainConfig{})), "training config");
  TrainConfig c;
  try {
    read(j, "epochs", c.epochs);
    read(j, "batch_size", c.batch_size);
    read(j, "lr", c.lr);
    read(j, "weight_decay", c.weight_decay);
    read(j, "warmup_steps", c.warmup_steps);
    read(j, "grad_clip", c.grad_clip);
    read(j, "seed", c.seed);
    read(j, "max_steps", c.max_steps);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  if (c.epochs <= 0 || c.batch_size <= 0 || c.lr <= 0.0) {
    throw ConfigError("epochs, batch_size and lr must be positive");
  }
  return c;
}

ClassTokens tokenize_classes(const ClassCatalog& catalog, const ModelConfig& config) {
  catalog.require_classes(static_cast<int>(config.num_classes));
  const text::WordTokenizer tokenizer;
  const auto buckets = static_cast<std::uint64_t>(config.text_vocab - (kEndToken + 1));
  const std::int64_t room = config.text_context - config.prompt_length;

  ClassTokens out;
  std::size_t longest = 0;
  for (std::int64_t c = 0; c < config.num_classes; ++c) {
    const auto& cls = catalog.at(static_cast<dataset::LabelId>(c));
    std::vector<std::int64_t> row{kStartToken};
    for (const auto& w : tokenizer.words(cls.description)) {
      row.push_back(kEndToken + 1 + static_cast<std::int64_t>(text::fnv1a(text::lowercase(w)) % buckets));
    }
    row.push_back(kEndToken);
    if (static_cast<std::int64_t>(row.size()) > room) {
      throw ValidationError("class_descriptions",
                            "description of class " + std::to_string(c) + " (" + cls.name + ") has " +
                                std::to_string(row.size()) + " tokens; at most " + std::to_string(room) +
                                " fit next to the motion prompt");
    }
    out.end_index.push_back(static_cast<std::int64_t>(row.size()) - 1);
    longest = std::max(longest, row.size());
    out.ids.push_back(std::move(row));
  }
  for (auto& row : out.ids) row.resize(longest, kPadToken);
  return out;
}

}  // namespace rehab::model
