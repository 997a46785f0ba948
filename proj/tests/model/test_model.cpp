#include "rehab/error.hpp"
#include "rehab/model/ablation.hpp"
#include "rehab/model/classifier_adapter.hpp"
#include "rehab/model/clip_provider.hpp"
#include "rehab/model/recognizer.hpp"
#include "rehab/model/trainer.hpp"

#include "../support/fixtures.hpp"
#include "../support/model_fixtures.hpp"

// c10 defines its own CHECK.
#undef CHECK
#include <doctest.h>

#include <cmath>

using namespace rehab;
using namespace rehab::model;

namespace {

const ClassCatalog& catalog() {
  static const ClassCatalog c = testing::fixture_catalog();
  return c;
}

ClipBatch random_batch(const ModelConfig& c, std::int64_t b, std::uint64_t seed) {
  torch::manual_seed(seed);
  ClipBatch batch;
  batch.frames = torch::randn({b, c.num_frames, 3, c.image_size, c.image_size});
  batch.skeleton = torch::randn({b, c.num_frames, c.skeleton_dim});
  batch.labels = torch::randint(0, c.num_classes, {b}, torch::kLong);
  return batch;
}

bool same_shape(const torch::Tensor& t, std::vector<std::int64_t> shape) { return t.sizes().vec() == shape; }

}  // namespace

TEST_CASE("stage outputs have the documented shapes") {
  const auto cfg = testing::small_model_config();
  auto m = make_recognizer(cfg, catalog(), 1);
  m->eval();
  torch::NoGradGuard guard;
  const std::int64_t B = 3, N = cfg.num_frames, D = cfg.embed_dim, C = cfg.num_classes;
  const auto batch = random_batch(cfg, B, 2);
  const auto s = m->streams(batch.frames, batch.skeleton);
  CHECK(same_shape(s.v_seq, {B, N, D}));
  CHECK(same_shape(s.k_s, {B, N, D}));
  CHECK(same_shape(s.t_s, {B, N, D}));
  CHECK(same_shape(s.t_m, {B, N - 1, D}));
  CHECK(same_shape(s.v, {B, 1, D}));
  const auto p_m = m->motion_prompt(s.t_m);
  CHECK(same_shape(p_m, {B, cfg.prompt_length, D}));
  const auto t = m->encode_class_texts(p_m);
  CHECK(same_shape(t, {B, C, D}));
  const auto [v2, t2] = m->cross_modal_enhance(s.v, t);
  CHECK(same_shape(v2, {B, 1, D}));
  CHECK(same_shape(t2, {B, C, D}));
  const auto logits = m->forward(batch.frames, batch.skeleton);
  CHECK(same_shape(logits, {B, C}));
  CHECK(torch::isfinite(logits).all().item<bool>());
}

TEST_CASE("shape violations are rejected") {
  const auto cfg = testing::small_model_config();
  auto m = make_recognizer(cfg, catalog(), 1);
  auto batch = random_batch(cfg, 2, 3);
  batch.skeleton = torch::randn({2, cfg.num_frames, 16});
  CHECK_THROWS(batch.validate(cfg));
  batch = random_batch(cfg, 2, 3);
  batch.frames[0][0][0][0][0] = std::nanf("");
  CHECK_THROWS_AS(batch.validate(cfg), ValidationError);
  CHECK_THROWS_AS(motion_differences(torch::zeros({1, 1, cfg.embed_dim})), ValidationError);
}

TEST_CASE("motion differences are consecutive frame deltas") {
  const auto v = torch::arange(2 * 4 * 3, torch::kFloat).reshape({2, 4, 3}).pow(2);
  const auto d = motion_differences(v);
  REQUIRE(same_shape(d, {2, 3, 3}));
  for (std::int64_t b = 0; b < 2; ++b) {
    for (std::int64_t t = 0; t < 3; ++t) {
      CHECK(torch::equal(d[b][t], v[b][t + 1] - v[b][t]));
    }
  }
}

TEST_CASE("cosine logits ignore feature scale and temperature keeps the argmax") {
  torch::manual_seed(5);
  const auto v = torch::randn({4, 1, 8}, torch::kDouble);
  const auto t = torch::randn({4, 6, 8}, torch::kDouble);
  const auto tau = torch::tensor(std::log(1.0 / 0.07), torch::kDouble);
  const auto base = cosine_logits(v, t, tau);
  CHECK(same_shape(base, {4, 6}));
  const auto scaled = cosine_logits(v * 7.5, t * 0.01, tau);
  CHECK(torch::allclose(base, scaled, 1e-9, 1e-9));
  // Direct oracle for one entry.
  const auto cos = torch::dot(v[1][0], t[1][2]) / (v[1][0].norm() * t[1][2].norm());
  CHECK(base[1][2].item<double>() == doctest::Approx((std::exp(tau.item<double>()) * cos).item<double>()));
  for (double tv : {-2.0, 0.0, 1.0, 4.6}) {
    const auto other = cosine_logits(v, t, torch::tensor(tv, torch::kDouble));
    CHECK(torch::equal(other.argmax(1), base.argmax(1)));
  }
  const auto zero = cosine_logits(torch::zeros({1, 1, 8}, torch::kDouble), t.slice(0, 0, 1), tau);
  CHECK(torch::isfinite(zero).all().item<bool>());
}

TEST_CASE("temperature is clamped to the configured maximum") {
  auto cfg = testing::small_model_config();
  auto m = make_recognizer(cfg, catalog(), 0);
  {
    torch::NoGradGuard guard;
    m->tau().fill_(10.0);
  }
  m->clamp_temperature();
  CHECK(std::exp(m->tau().item<double>()) == doctest::Approx(cfg.max_logit_scale));
}

TEST_CASE("first training step starts near uniform cross-entropy") {
  const auto cfg = testing::small_model_config();
  auto m = make_recognizer(cfg, catalog(), 0);
  const auto clips = synthetic_clips(16, 1, cfg, 3);
  TrainOptions opt;
  opt.config.batch_size = 16;
  opt.config.max_steps = 1;
  opt.config.epochs = 1;
  const auto r = train(m, clips, nullptr, opt);
  REQUIRE_FALSE(r.step_losses.empty());
  const double ln16 = std::log(16.0);
  MESSAGE("first-step loss " << r.step_losses.front() << " vs ln 16 = " << ln16);
  CHECK(std::abs(r.step_losses.front() - ln16) <= 0.2 * ln16);
}

TEST_CASE("three-class synthetic set is memorised within 200 steps") {
  const auto cfg = testing::small_model_config();
  auto m = make_recognizer(cfg, catalog(), 0);
  const auto clips = synthetic_clips(3, 8, cfg, 11);
  TrainOptions opt;
  opt.config.batch_size = 8;
  opt.config.epochs = 200;
  opt.config.max_steps = 200;
  opt.config.lr = 1e-3;
  opt.config.weight_decay = 0.0;
  const auto r = train(m, clips, nullptr, opt);
  CHECK(r.history.back().steps <= 200);
  const auto metrics = evaluate(m, clips);
  MESSAGE("train accuracy " << metrics.top1_accuracy << " after " << r.history.back().steps << " steps");
  CHECK(metrics.top1_accuracy >= 0.95);
}

TEST_CASE("training is reproducible from the seed") {
  const auto cfg = testing::small_model_config();
  const auto clips = synthetic_clips(2, 4, cfg, 1);
  TrainOptions opt;
  opt.config.batch_size = 4;
  opt.config.max_steps = 3;
  opt.config.seed = 9;
  auto a = make_recognizer(cfg, catalog(), 4);
  auto b = make_recognizer(cfg, catalog(), 4);
  const auto ra = train(a, clips, nullptr, opt);
  const auto rb = train(b, clips, nullptr, opt);
  CHECK(ra.step_losses == rb.step_losses);
}

TEST_CASE("learning rate schedule warms up then decays") {
  TrainConfig c;
  c.lr = 1.0;
  c.warmup_steps = 4;
  CHECK(learning_rate_at(c, 0, 20) == doctest::Approx(0.25));
  CHECK(learning_rate_at(c, 3, 20) == doctest::Approx(1.0));
  CHECK(learning_rate_at(c, 4, 20) == doctest::Approx(1.0));
  CHECK(learning_rate_at(c, 12, 20) == doctest::Approx(0.5));
  CHECK(learning_rate_at(c, 20, 20) == doctest::Approx(0.0));
}

TEST_CASE("ablation variants differ only in the skeleton path") {
  std::map<Variant, std::int64_t> skeleton, total;
  for (Variant v : all_variants()) {
    auto m = make_recognizer(testing::small_model_config(v), catalog(), 0);
    skeleton[v] = m->skeleton_parameter_count();
    total[v] = m->parameter_count();
  }
  CHECK(skeleton[Variant::no_skeleton] == 0);
  CHECK(skeleton[Variant::full] > 0);
  CHECK(skeleton[Variant::mlp_skeleton_encoder] > 0);
  CHECK(skeleton[Variant::mlp_guided_fuse] > 0);
  CHECK(skeleton[Variant::mlp_skeleton_encoder] != skeleton[Variant::full]);
  CHECK(skeleton[Variant::mlp_guided_fuse] != skeleton[Variant::full]);
  for (Variant v : all_variants()) {
    CHECK(total[v] - skeleton[v] == total[Variant::no_skeleton]);
  }
  CHECK_THROWS_AS(variant_from_string("bogus"), ConfigError);
  CHECK(parse_variants({"full", "no_skeleton"}).size() == 2);
}

TEST_CASE("every ablation variant trains for one epoch") {
  const auto cfg = testing::small_model_config();
  const auto train_set = synthetic_clips(3, 2, cfg, 5);
  const auto test_set = synthetic_clips(3, 1, cfg, 6);
  AblationOptions opt;
  opt.base = cfg;
  opt.train.epochs = 1;
  opt.train.batch_size = 3;
  const auto rows = run_ablation(all_variants(), catalog(), train_set, nullptr, test_set, opt);
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) {
    CHECK(row.training.history.size() == 1);
    CHECK(std::isfinite(row.training.history[0].train_loss));
    CHECK(row.metrics.top1_accuracy >= 0.0);
  }
  CHECK(rows[1].variant == Variant::no_skeleton);
  CHECK(rows[1].skeleton_parameters == 0);
  CHECK(ablation_to_csv(rows).rfind("variant,parameters", 0) == 0);
}

TEST_CASE("checkpoints round trip and refuse other class texts") {
  const auto cfg = testing::small_model_config();
  auto m = make_recognizer(cfg, catalog(), 7);
  testing::TempDir dir("ckpt");
  save_checkpoint(m, dir / "model.pt");
  auto back = load_checkpoint(dir / "model.pt", catalog());
  const auto batch = random_batch(cfg, 2, 8);
  m->eval();
  back->eval();
  torch::NoGradGuard guard;
  CHECK(torch::allclose(m->forward(batch.frames, batch.skeleton), back->forward(batch.frames, batch.skeleton)));
  CHECK(checkpoint_config(dir / "model.pt").embed_dim == cfg.embed_dim);

  auto json_text = testing::read_file(testing::source_dir() / "config" / "classes.json");
  const auto pos = json_text.find("description");
  REQUIRE(pos != std::string::npos);
  json_text.insert(json_text.find('"', json_text.find(':', pos)) + 1, "Edited. ");
  std::ofstream(dir / "classes.json") << json_text;
  const auto edited = ClassCatalog::load(dir / "classes.json");
  CHECK_THROWS_AS(load_checkpoint(dir / "model.pt", edited), ConfigError);
}

TEST_CASE("recognizer serves as a window classifier") {
  const auto cfg = testing::small_model_config();
  RecognizerClassifier clf(make_recognizer(cfg, catalog(), 2));
  std::vector<segment::WindowInput> windows(2);
  for (auto& w : windows) {
    for (int f = 0; f < cfg.num_frames; ++f) w.frames.push_back(testing::label_frame(3, 32, 32));
    w.skeleton = pose::FeatureMatrix::Zero(cfg.num_frames, pose::kFeatureDim);
  }
  const auto probs = clf.predict_proba(windows);
  REQUIRE(probs.size() == 2);
  double sum = 0.0;
  for (double p : probs[0]) sum += p;
  CHECK(probs[0].size() == 16);
  CHECK(sum == doctest::Approx(1.0));
  CHECK(probs[0] == probs[1]);
  CHECK(clf.fingerprint().rfind("recognizer:full:", 0) == 0);
}
