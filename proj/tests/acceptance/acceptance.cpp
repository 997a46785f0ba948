// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "rehab/dataset_builder.hpp"
#include "rehab/knowledge_retrieval.hpp"
#include "rehab/llm_client.hpp"
#include "rehab/model/ablation.hpp"
#include "rehab/model/recognizer.hpp"
#include "rehab/model/trainer.hpp"
#include "rehab/pose_features.hpp"
#include "rehab/prompts.hpp"
#include "rehab/rehab_service.hpp"
#include "rehab/report_generator.hpp"
#include "rehab/service_logic.hpp"
#include "rehab/statistics.hpp"

#include "../support/fixtures.hpp"
#include "../support/model_fixtures.hpp"

#include <httplib.h>
#include <json.hpp>

#include <Eigen/Geometry>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

using namespace rehab;
using nlohmann::json;

namespace {

/// Collects failed expectations for one criterion.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 8) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void note(const std::string& text) { notes_.push_back(text); }
  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::ostringstream out;
    for (const auto& n : notes_) out << n << "; ";
    if (failed_) {
      out << failed_ << " failed check(s):";
      for (const auto& f : failures_) out << " [" << f << "]";
    }
    return out.str();
  }

 private:
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
  int failed_ = 0;
};

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<void(Checks&)> run;
};

std::string fmt_double(double v, int precision = 6) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

const ClassCatalog& catalog() {
  static const ClassCatalog c = testing::fixture_catalog();
  return c;
}

// ---- joint angles -------------------------------------------------------------

void joint_angles(Checks& c) {
  using pose::Vec3;
  const Vec3 b(1.0, 2.0, 3.0);
  const struct {
    Vec3 a, c;
    double want;
  } cases[] = {{b + Vec3(1, 0, 0), b + Vec3(0, 1, 0), M_PI / 2},
               {b + Vec3(2, 0, 0), b + Vec3(-3, 0, 0), M_PI},
               {b + Vec3(1, 0, 0), b + Vec3(1, 1, 0), M_PI / 4}};
  for (const auto& k : cases) {
    const double got = pose::joint_angle(k.a, b, k.c);
    c.expect(std::abs(got - k.want) < 1e-9, "analytic angle " + fmt_double(k.want) + " got " + fmt_double(got, 17));
  }

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto rv = [&] { return Vec3(u(rng), u(rng), u(rng)); };
  double worst_inv = 0.0, worst_grad = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 pa = rv(), pb = rv(), pc = rv();
    const double base = pose::joint_angle(pa, pb, pc);
    if (std::sin(base) < 1e-3) continue;
    const Eigen::Matrix3d R = Eigen::Quaterniond::UnitRandom().toRotationMatrix();
    const Vec3 t = 10.0 * rv();
    const double moved = pose::joint_angle(R * pa + t, R * pb + t, R * pc + t);
    worst_inv = std::max(worst_inv, std::abs(moved - base));

    const auto g = pose::joint_angle_gradient(pa, pb, pc);
    const double h = 1e-5;
    for (int which = 0; which < 3; ++which) {
      for (int axis = 0; axis < 3; ++axis) {
        Vec3 p[3] = {pa, pb, pc};
        p[which][axis] += h;
        const double up = pose::joint_angle(p[0], p[1], p[2]);
        p[which][axis] -= 2 * h;
        const double down = pose::joint_angle(p[0], p[1], p[2]);
        const double fd = (up - down) / (2 * h);
        const Vec3& an = which == 0 ? g.d_a : which == 1 ? g.d_b : g.d_c;
        const double rel = std::abs(an[axis] - fd) / std::max(1.0, std::abs(fd));
        worst_grad = std::max(worst_grad, rel);
      }
    }
  }
  c.expect(worst_inv < 1e-9, "rigid motion changed an angle by " + fmt_double(worst_inv));
  c.expect(worst_grad < 1e-4, "gradient relative error " + fmt_double(worst_grad));
  c.note("max invariance error " + fmt_double(worst_inv, 3) + ", max gradient rel. error " + fmt_double(worst_grad, 3));
}

// ---- windows ------------------------------------------------------------------

void window_extraction(Checks& c) {
  for (std::int64_t n = 0; n <= 500; ++n) {
    c.expect(dataset::extract_windows(n) == testing::enumerate_window_starts(n), "frame_count " + std::to_string(n));
  }
  c.expect(dataset::extract_windows(150).size() == 5, "150 frames give 5 windows");
  c.note("frame counts 0..500 match enumeration");
}

// ---- label resolution ---------------------------------------------------------

std::vector<dataset::LabelId> run_of(std::initializer_list<std::pair<dataset::LabelId, int>> runs) {
  std::vector<dataset::LabelId> out;
  for (auto [label, n] : runs) out.insert(out.end(), static_cast<std::size_t>(n), label);
  return out;
}

void label_resolution(Checks& c) {
  using dataset::resolve_window_label;
  const dataset::LabelId A = 4, B = 9, none = dataset::kNoAction;
  c.expect(resolve_window_label(run_of({{A, 6}, {B, 4}})) == A, "majority");
  c.expect(resolve_window_label(run_of({{none, 5}, {A, 5}})) == A, "action over no-action");
  c.expect(resolve_window_label(run_of({{A, 5}, {B, 5}})) == A, "earliest occurrence (A first)");
  c.expect(resolve_window_label(run_of({{B, 5}, {A, 5}})) == B, "earliest occurrence (B first)");
  c.expect(resolve_window_label(run_of({{none, 6}, {A, 4}})) == none, "no-action majority");
  c.expect(resolve_window_label(run_of({{A, 1}, {B, 3}, {A, 2}, {B, 1}, {none, 3}})) == B, "interleaved majority");
}

// ---- model --------------------------------------------------------------------

bool has_shape(const torch::Tensor& t, std::vector<std::int64_t> shape) { return t.sizes().vec() == shape; }

void model_properties(Checks& c) {
  using namespace rehab::model;
  const auto cfg = testing::small_model_config();
  const std::int64_t B = 2, N = cfg.num_frames, D = cfg.embed_dim, C = cfg.num_classes;
  {
    auto m = make_recognizer(cfg, catalog(), 1);
    m->eval();
    torch::NoGradGuard guard;
    torch::manual_seed(3);
    const auto frames = torch::randn({B, N, 3, cfg.image_size, cfg.image_size});
    const auto skeleton = torch::randn({B, N, cfg.skeleton_dim});
    const auto s = m->streams(frames, skeleton);
    c.expect(has_shape(s.v_seq, {B, N, D}), "V_seq shape");
    c.expect(has_shape(s.k_s, {B, N, D}), "K_s shape");
    c.expect(has_shape(s.t_s, {B, N, D}), "T_s shape");
    c.expect(has_shape(s.t_m, {B, N - 1, D}), "T_m shape");
    c.expect(has_shape(s.v, {B, 1, D}), "V shape");
    const auto p_m = m->motion_prompt(s.t_m);
    c.expect(has_shape(p_m, {B, cfg.prompt_length, D}), "P_m shape");
    const auto t = m->encode_class_texts(p_m);
    c.expect(has_shape(t, {B, C, D}), "T shape");
    const auto [v2, t2] = m->cross_modal_enhance(s.v, t);
    c.expect(has_shape(v2, {B, 1, D}) && has_shape(t2, {B, C, D}), "cross-modal shapes");
    c.expect(has_shape(m->forward(frames, skeleton), {B, C}), "logit shape");
  }
  {
    torch::manual_seed(5);
    const auto v = torch::randn({4, 1, 8}, torch::kDouble);
    const auto t = torch::randn({4, 6, 8}, torch::kDouble);
    const auto tau = torch::tensor(std::log(1.0 / 0.07), torch::kDouble);
    const auto base = cosine_logits(v, t, tau);
    c.expect(torch::allclose(base, cosine_logits(v * 7.5, t * 0.01, tau), 1e-9, 1e-9), "cosine scale invariance");
    for (double tv : {-2.0, 0.0, 4.6}) {
      c.expect(torch::equal(cosine_logits(v, t, torch::tensor(tv, torch::kDouble)).argmax(1), base.argmax(1)),
               "argmax invariant to temperature");
    }
  }
  {
    auto m = make_recognizer(cfg, catalog(), 0);
    TrainOptions opt;
    opt.config.batch_size = 16;
    opt.config.max_steps = 1;
    opt.config.epochs = 1;
    const auto r = train(m, synthetic_clips(16, 1, cfg, 3), nullptr, opt);
    const double first = r.step_losses.empty() ? NAN : r.step_losses.front();
    const double ln16 = std::log(16.0);
    c.expect(std::abs(first - ln16) <= 0.2 * ln16, "first-step loss " + fmt_double(first) + " not within 20% of ln 16");
    c.note("first-step loss " + fmt_double(first, 4) + " (ln 16 = " + fmt_double(ln16, 4) + ")");
  }
  {
    auto m = make_recognizer(cfg, catalog(), 0);
    const auto clips = synthetic_clips(3, 8, cfg, 11);
    TrainOptions opt;
    opt.config.batch_size = 8;
    opt.config.epochs = 200;
    opt.config.max_steps = 200;
    opt.config.lr = 1e-3;
    opt.config.weight_decay = 0.0;
    const auto r = train(m, clips, nullptr, opt);
    const auto steps = r.history.empty() ? 0 : r.history.back().steps;
    const double acc = evaluate(m, clips).top1_accuracy;
    c.expect(steps <= 200, "step budget exceeded");
    c.expect(acc >= 0.95, "3-class train accuracy " + fmt_double(acc));
    c.note("3-class train accuracy " + fmt_double(acc, 4) + " after " + std::to_string(steps) + " steps");
  }
}

void ablation_plumbing(Checks& c) {
  using namespace rehab::model;
  const auto cfg = testing::small_model_config();
  AblationOptions opt;
  opt.base = cfg;
  opt.train.epochs = 1;
  opt.train.batch_size = 4;
  const auto rows = run_ablation(all_variants(), catalog(), synthetic_clips(3, 4, cfg, 5), nullptr,
                                 synthetic_clips(3, 2, cfg, 6), opt);
  c.expect(rows.size() == 4, "four variants");
  std::map<Variant, const AblationRow*> by;
  for (const auto& r : rows) by[r.variant] = &r;
  if (by.size() != 4) return;
  const auto base = by[Variant::no_skeleton]->parameters;
  for (const auto& r : rows) {
    c.expect(r.training.history.size() == 1 && std::isfinite(r.training.history[0].train_loss),
             to_string(r.variant) + " trained one epoch");
    c.expect(r.parameters - r.skeleton_parameters == base, to_string(r.variant) + " differs outside the skeleton path");
  }
  c.expect(by[Variant::no_skeleton]->skeleton_parameters == 0, "no_skeleton has skeleton parameters");
  c.expect(by[Variant::full]->skeleton_parameters > 0, "full has a skeleton path");
  c.expect(by[Variant::mlp_skeleton_encoder]->skeleton_parameters != by[Variant::full]->skeleton_parameters,
           "mlp encoder changes the skeleton path");
  c.expect(by[Variant::mlp_guided_fuse]->skeleton_parameters != by[Variant::full]->skeleton_parameters,
           "mlp fusion changes the skeleton path");
  std::ostringstream note;
  for (const auto& r : rows) note << to_string(r.variant) << "=" << r.skeleton_parameters << " ";
  c.note("skeleton parameters: " + note.str());
}

// ---- retrieval ----------------------------------------------------------------

void retrieval_oracle(Checks& c) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<float> n(0.0f, 1.0f);
  const std::size_t dim = 32;
  auto vec = [&] {
    std::vector<float> v(dim);
    for (auto& x : v) x = n(rng);
    return v;
  };
  knowledge::VectorIndex index("synthetic", dim);
  for (int i = 0; i < 1000; ++i) index.add({"c" + std::to_string(i), "chunk", "doc", 1, vec()});
  int mismatches = 0;
  for (int q = 0; q < 100; ++q) {
    const auto query = vec();
    std::vector<std::pair<double, std::string>> all;
    double qn = 0.0;
    for (float x : query) qn += static_cast<double>(x) * x;
    for (std::size_t i = 0; i < index.size(); ++i) {
      const auto& e = index.chunk(i).embedding;
      double dot = 0.0, en = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        dot += static_cast<double>(e[d]) * query[d];
        en += static_cast<double>(e[d]) * e[d];
      }
      all.emplace_back(dot / std::sqrt(en * qn), index.chunk(i).chunk_id);
    }
    std::sort(all.begin(), all.end(),
              [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    const auto got = index.search(query, 3);
    bool same = got.hits.size() == 3;
    for (std::size_t r = 0; same && r < 3; ++r) same = got.hits[r].chunk_id == all[r].second;
    if (!same) ++mismatches;
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " of 100 queries differ from the full scan");
  c.note("100 queries over 1000 chunks");
}

// ---- report orchestration -----------------------------------------------------

void report_orchestration(Checks& c) {
  constexpr double fps = 30.0;
  for (auto [secs, want] : {std::pair{30.0, 1}, {45.0, 1}, {600.0, 14}}) {
    const auto got = report::chunk_count(secs);
    c.expect(got == static_cast<std::size_t>(want), "chunk_count(" + fmt_double(secs) + ") = " + std::to_string(got));
  }
  auto seg = [&](const std::string& id, dataset::LabelId label, double seconds) {
    segment::ActionSegment s;
    s.segment_id = id;
    s.video_id = "v";
    s.label = label;
    s.start_frame = 0;
    s.end_frame = static_cast<std::int64_t>(std::llround(seconds * fps)) - 1;
    return s;
  };
  // 30 s -> 1 chunk, 120 s -> 3 chunks.
  const std::vector<std::pair<std::vector<double>, std::uint64_t>> cases = {
      {{30.0}, 2}, {{120.0}, 5}, {{30.0, 120.0}, 6}};
  for (const auto& [durations, want_calls] : cases) {
    auto client = llm::MockLlmClient::hashed();
    llm::Transcript transcript;
    report::ReportContext ctx;
    ctx.catalog = &catalog();
    ctx.client = client.get();
    ctx.transcript = &transcript;
    ctx.retry.sleep = [](std::chrono::milliseconds) {};
    report::SessionInput in;
    in.session_id = "s";
    for (std::size_t i = 0; i < durations.size(); ++i) {
      in.segments.push_back(seg("seg" + std::to_string(i), static_cast<int>(i) + 1, durations[i]));
    }
    in.open_clip = [&](const segment::ActionSegment& s) -> std::unique_ptr<media::VideoSource> {
      media::VideoInfo info{s.frame_count(), fps, 8, 8};
      return std::make_unique<media::GeneratedVideo>(info, [](std::int64_t f) {
        return media::Image::solid(8, 8, 32, static_cast<std::uint8_t>(f % 256), 0);
      });
    };
    const auto rep = report::generate_report(in, ctx);
    const std::string label = "durations " + std::to_string(durations.size());
    c.expect(client->calls() == want_calls, label + ": " + std::to_string(client->calls()) + " calls, want " +
                                                std::to_string(want_calls));
    std::map<std::string, int> seen;
    for (const auto& a : rep.actions) ++seen[a.segment_id];
    c.expect(seen.size() == in.segments.size(), label + ": segment coverage");
    for (const auto& [id, n] : seen) c.expect(n == 1, label + ": " + id + " appears " + std::to_string(n) + " times");
    for (const auto& e : transcript.entries()) {
      c.expect(prompts::find_placeholders(e.prompt).empty(), label + ": unresolved placeholder in " + e.template_id);
    }
  }
  c.note("chunk sets {1}, {3}, {1,3} gave 2, 5, 6 calls");
}

// ---- statistics ---------------------------------------------------------------

void statistics(Checks& c) {
  const std::vector<double> a = {1, 2, 3}, b = {4, 5, 6};
  const auto mw = stats::mann_whitney_u(a, b);
  // Enumeration oracle: 2 of the 20 equally likely splits are as extreme.
  double hits = 0, total = 0;
  std::vector<bool> mask = {false, false, false, true, true, true};
  const std::vector<double> pooled = {1, 2, 3, 4, 5, 6};
  do {
    double u = 0;
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) {
        if (mask[i] && !mask[j]) u += pooled[i] > pooled[j] ? 1.0 : pooled[i] == pooled[j] ? 0.5 : 0.0;
      }
    }
    total += 1;
    if (std::abs(u - 4.5) >= 4.5) hits += 1;
  } while (std::next_permutation(mask.begin(), mask.end()));
  c.expect(mw.exact, "exact path used");
  c.expect(std::abs(mw.p_value - 0.1) < 1e-12, "Mann-Whitney p " + fmt_double(mw.p_value));
  c.expect(std::abs(mw.p_value - hits / total) < 1e-12, "enumeration oracle " + fmt_double(hits / total));

  const std::vector<double> heights = {148, 154, 158, 160, 161, 162, 166, 170, 182, 195, 236};
  const auto sw = stats::shapiro_wilk(heights);
  c.expect(std::abs(sw.w - 0.78881) < 1e-3, "Shapiro-Wilk W " + fmt_double(sw.w));
  c.note("U p = " + fmt_double(mw.p_value) + ", W = " + fmt_double(sw.w, 6) + ", p = " + fmt_double(sw.p_value, 4));
}

// ---- adherence ----------------------------------------------------------------

void adherence(Checks& c) {
  const auto fx = testing::adherence_fixture();
  const auto s = service::adherence_stats(fx.patients, fx.start, fx.end);
  c.expect(s.total_sessions == 57 && s.patients == 15, "57 sessions over 15 patients");
  c.expect(s.avg_sessions == 3.8, "average sessions " + fmt_double(s.avg_sessions, 17));
  c.expect(s.per_patient.at(0).frequency == 1.0, "3/3 -> 1.0");
  c.expect(s.per_patient.at(1).frequency == 0.25, "1/4 -> 0.25");
  double sum = 0.0;
  for (const auto& p : s.per_patient) sum += static_cast<double>(p.sessions) / static_cast<double>(p.enrolled_days);
  c.expect(std::abs(s.avg_frequency - sum / 15.0) < 1e-12, "mean of per-patient frequencies");
  c.expect(std::round(s.avg_frequency * 100.0) / 100.0 == 0.59, "fixture average " + fmt_double(s.avg_frequency));
  c.note("avg sessions " + fmt_double(s.avg_sessions) + ", avg frequency " + fmt_double(s.avg_frequency, 4));
}

// ---- service ------------------------------------------------------------------

void service_integration(Checks& c) {
  testing::TempDir dir("acceptance");
  testing::StubClassifier stub;
  auto llm_client = llm::MockLlmClient::hashed();
  service::ServiceConfig cfg;
  cfg.data_dir = dir.path() / "data";
  cfg.nurse_token = "nurse";
  cfg.reminder_interval = std::chrono::seconds{0};
  cfg.worker_poll = std::chrono::milliseconds{20};
  service::Pipeline p;
  p.classifier = &stub;
  p.catalog = &catalog();
  p.llm = llm_client.get();
  p.retry.sleep = [](std::chrono::milliseconds) {};

  dataset::TimelineAnnotation ann;
  ann.spans = {{0, 299, 3}, {450, 899, 7}};
  const std::string video = testing::labelled_video_bytes(ann, 900, dir.path());
  const std::string keypoints = testing::body25_stream_text(900);

  const auto t0 = std::chrono::steady_clock::now();
  service::RehabService svc(cfg, p);
  svc.start_workers();
  const int port = svc.bind("127.0.0.1", 0);
  svc.serve_in_background();
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(60, 0);
  const httplib::Headers nurse = {{"Authorization", "Bearer nurse"}};
  auto res = cli.Post("/patients", nurse, R"({"patient_id": "acceptance"})", "application/json");
  if (!res || res->status != 201) {
    c.expect(false, "patient registration");
    svc.stop();
    return;
  }
  const httplib::Headers patient = {{"Authorization", "Bearer " + json::parse(res->body).at("token").get<std::string>()}};
  httplib::MultipartFormDataItems items = {{"video", video, "session.avi", "video/x-msvideo"},
                                           {"keypoints", keypoints, "pose.jsonl", "application/x-ndjson"}};
  res = cli.Post("/sessions", patient, items);
  if (!res || res->status != 202) {
    c.expect(false, "upload accepted");
    svc.stop();
    return;
  }
  const std::string sid = json::parse(res->body).at("session_id");

  json session;
  while (std::chrono::steady_clock::now() - t0 < std::chrono::seconds{60}) {
    res = cli.Get("/sessions/" + sid, patient);
    if (res && res->status == 200) {
      session = json::parse(res->body);
      const std::string status = session.at("status");
      if (status == "reported" || status == "failed") break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds{50});
  }
  c.expect(session.value("status", "") == "reported", "session reached reported (" + session.dump().substr(0, 200) + ")");
  std::vector<std::string> history;
  if (session.contains("status_history")) {
    for (const auto& e : session["status_history"]) history.push_back(e.at("status"));
  }
  c.expect(history == std::vector<std::string>{"uploaded", "segmented", "reported"}, "status history in order");
  if (session.contains("report_id") && session["report_id"].is_string()) {
    res = cli.Get("/reports/" + session["report_id"].get<std::string>(), patient);
    c.expect(res && res->status == 200, "report fetch");
    if (res && res->status == 200) {
      const auto body = json::parse(res->body);
      c.expect(body.at("report").at("actions").size() == 2, "two segments assessed");
      c.expect(!body.at("report").at("final_summary").get<std::string>().empty(), "final summary present");
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.expect(secs < 60.0, "end-to-end took " + fmt_double(secs) + " s");
  c.note("30 s video end to end in " + fmt_double(secs, 3) + " s");
  svc.stop();
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"joint-angle correctness", 1.0, joint_angles},
      {"window extraction oracle", 1.0, window_extraction},
      {"label resolution", 1.0, label_resolution},
      {"model property suite", 600.0, model_properties},
      {"ablation plumbing", 900.0, ablation_plumbing},
      {"retrieval oracle", 10.0, retrieval_oracle},
      {"report orchestration", 10.0, report_orchestration},
      {"statistics", 1.0, statistics},
      {"adherence analytics", 1.0, adherence},
      {"service integration", 60.0, service_integration},
  };
  int failed = 0;
  for (const auto& crit : criteria) {
    Checks checks;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      crit.run(checks);
    } catch (const std::exception& e) {
      checks.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    checks.expect(secs < crit.budget_seconds,
                  "runtime " + fmt_double(secs) + " s over budget " + fmt_double(crit.budget_seconds) + " s");
    const bool ok = checks.ok();
    failed += ok ? 0 : 1;
    std::cout << (ok ? "PASS" : "FAIL") << "  " << crit.name << "  (" << fmt_double(secs, 3) << " s)  "
              << checks.summary() << std::endl;
  }
  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " criterion(s) failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
