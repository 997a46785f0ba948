#include "rehab/blob_store.hpp"
#include "rehab/error.hpp"
#include "rehab/llm_client.hpp"
#include "rehab/rehab_service.hpp"
#include "rehab/report_generator.hpp"
#include "rehab/service_logic.hpp"
#include "rehab/store.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <cmath>

using namespace rehab;
using namespace rehab::service;
using namespace std::chrono;
using nlohmann::json;

namespace {

TimePoint at(const char* iso) { return parse_time(iso); }

Date ymd(int y, unsigned m, unsigned d) { return Date{year{y}, month{m}, day{d}}; }

class RecordingSender final : public ReminderSender {
 public:
  void send(const PatientRecord& patient, const ReminderRecord&) override {
    if (fail_next) {
      fail_next = false;
      throw std::runtime_error("gateway down");
    }
    delivered.push_back(patient.patient_id);
  }
  std::vector<std::string> delivered;
  bool fail_next = false;
};

struct ServiceHarness {
  testing::TempDir dir{"service"};
  ClassCatalog catalog = testing::fixture_catalog();
  testing::StubClassifier stub;
  std::unique_ptr<llm::MockLlmClient> llm = llm::MockLlmClient::hashed(64);
  llm::Transcript transcript;
  TimePoint now = at("2025-03-10T09:00:00Z");
  std::shared_ptr<RecordingSender> sender = std::make_shared<RecordingSender>();
  std::unique_ptr<RehabService> service;

  explicit ServiceHarness(std::string nurse_token = "nurse-secret") {
    ServiceConfig cfg;
    cfg.data_dir = dir.path() / "data";
    cfg.max_upload_bytes = 8 << 20;
    cfg.nurse_token = std::move(nurse_token);
    cfg.reminder_interval = seconds{0};
    cfg.job_retry_delay = seconds{0};
    Pipeline p;
    p.classifier = &stub;
    p.catalog = &catalog;
    p.llm = llm.get();
    p.transcript = &transcript;
    p.retry.sleep = [](milliseconds) {};
    service = std::make_unique<RehabService>(cfg, p, [this] { return now; }, sender);
  }

  std::string video_bytes(std::int64_t frames = 900) {
    dataset::TimelineAnnotation ann;
    ann.spans = {{0, 299, 3}, {450, 899, 7}};
    return testing::labelled_video_bytes(ann, frames, dir.path());
  }
};

}  // namespace

TEST_CASE("dates and times round trip") {
  CHECK(format_date(ymd(2025, 3, 9)) == "2025-03-09");
  CHECK(parse_date("2025-03-09") == ymd(2025, 3, 9));
  CHECK_THROWS_AS(parse_date("2025-13-01"), ValidationError);
  CHECK_THROWS_AS(parse_date("yesterday"), ValidationError);
  CHECK(format_time(at("2025-08-23T08:00:00Z")) == "2025-08-23T08:00:00Z");
}

TEST_CASE("status machine only moves forward or to failed") {
  using S = SessionStatus;
  CHECK(can_transition(S::uploaded, S::segmented));
  CHECK(can_transition(S::segmented, S::reported));
  CHECK(can_transition(S::uploaded, S::failed));
  CHECK(can_transition(S::reported, S::failed));
  CHECK_FALSE(can_transition(S::segmented, S::uploaded));
  CHECK_FALSE(can_transition(S::uploaded, S::reported));
  CHECK_FALSE(can_transition(S::failed, S::uploaded));
  CHECK_FALSE(can_transition(S::failed, S::failed));
  CHECK(status_from_string(to_string(S::segmented)) == S::segmented);
}

TEST_CASE("framing check") {
  CHECK(framing_check({300, 200, 0.9}, {340, 200, 0.9}, 640, 480).status == FramingStatus::in_frame);
  CHECK(framing_check({-1, 200, 0.9}, {340, 200, 0.9}, 640, 480).status == FramingStatus::out_of_frame);
  CHECK(framing_check({300, 200, 0.9}, {340, 200, 0.1}, 640, 480, 0.3).status == FramingStatus::out_of_frame);
  CHECK(framing_check({300, 480, 0.9}, {340, 200, 0.9}, 640, 480).status == FramingStatus::out_of_frame);
  CHECK_FALSE(framing_check({300, 200, 0.1}, {340, 200, 0.9}, 640, 480).reason.empty());
}

TEST_CASE("next reminder is the next local 08:00") {
  auto r = next_reminder(at("2025-03-10T20:00:00Z"), 0);
  CHECK(format_time(r.at) == "2025-03-11T08:00:00Z");
  CHECK(r.local_date == ymd(2025, 3, 11));
  r = next_reminder(at("2025-03-10T07:59:59Z"), 0);
  CHECK(format_time(r.at) == "2025-03-10T08:00:00Z");
  r = next_reminder(at("2025-03-10T08:00:00Z"), 0);
  CHECK(r.local_date == ymd(2025, 3, 11));
  // 20:00 local at UTC+8 is 12:00 UTC; the next 08:00 local is 00:00 UTC.
  r = next_reminder(at("2025-03-10T12:00:00Z"), 480);
  CHECK(format_time(r.at) == "2025-03-11T00:00:00Z");
  CHECK(r.local_date == ymd(2025, 3, 11));
}

TEST_CASE("feedback scores must lie in 1..10") {
  FeedbackScores s;
  for (auto d : kFeedbackDimensions) s[d] = 7;
  CHECK_NOTHROW(validate_feedback(s));
  s["safety"] = 11;
  CHECK_THROWS_AS(validate_feedback(s), ValidationError);
  s["safety"] = 0;
  CHECK_THROWS_AS(validate_feedback(s), ValidationError);
  CHECK_THROWS(s["style"]);
}

TEST_CASE("adherence arithmetic") {
  const std::vector<PatientAdherence> simple = {{"a", 3, 3, 0}, {"b", 1, 4, 0}};
  const auto s = adherence_from_counts(simple);
  CHECK(s.per_patient[0].frequency == 1.0);
  CHECK(s.per_patient[1].frequency == 0.25);
  CHECK(s.avg_sessions == 2.0);
  CHECK(s.avg_frequency == 0.625);
  CHECK_THROWS_AS(adherence_from_counts({}), ValidationError);

  const auto fx = testing::adherence_fixture();
  const auto stats = adherence_stats(fx.patients, fx.start, fx.end);
  CHECK(stats.patients == 15);
  CHECK(stats.total_sessions == 57);
  CHECK(stats.avg_sessions == doctest::Approx(3.8).epsilon(1e-12));
  // Independent sum of the per-patient ratios.
  const double expected = (3.0 / 3 + 1.0 / 4 + 12.0 / 14 + 8.0 / 14 + 7.0 / 14 + 6.0 / 14 + 6 * (2.0 / 3) + 3.0 / 8 +
                           3.0 / 8 + 2.0 / 4) / 15.0;
  CHECK(stats.avg_frequency == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::round(stats.avg_frequency * 100.0) / 100.0 == 0.59);
  CHECK(stats.per_patient[0].frequency == 1.0);
  CHECK(stats.per_patient[1].frequency == 0.25);
}

TEST_CASE("adherence uses patient-local dates and the period bounds") {
  PatientAdherenceInput p{"p", ymd(2025, 3, 1), {at("2025-03-01T23:30:00Z"), at("2025-02-27T10:00:00Z")}, 60};
  PatientAdherenceInput late{"late", ymd(2025, 4, 1), {}, 0};
  const std::vector<PatientAdherenceInput> in = {p, late};
  const auto s = adherence_stats(in, ymd(2025, 3, 1), ymd(2025, 3, 2));
  REQUIRE(s.patients == 1);
  CHECK(s.per_patient[0].enrolled_days == 2);
  CHECK(s.per_patient[0].sessions == 1);  // 00:30 local on 03-02; the February one is outside
  CHECK_THROWS_AS(adherence_stats(in, ymd(2025, 3, 2), ymd(2025, 3, 1)), ValidationError);
}

TEST_CASE("blob store is content addressed") {
  testing::TempDir dir("blobs");
  BlobStore blobs(dir.path());
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const auto a = blobs.put("hello", "txt");
  const auto b = blobs.put("hello", "txt");
  CHECK(a == b);
  CHECK(blobs.get(a) == "hello");
  CHECK(blobs.contains(a));
  CHECK_FALSE(blobs.contains("blob:sha256:" + std::string(64, '0')));
  CHECK_THROWS_AS(blobs.path_of("blob:sha256:00"), ValidationError);
}

TEST_CASE("store sessions, jobs and reports") {
  Store store(":memory:");
  CHECK(store.migrate() >= 1);
  store.insert_patient({"p1", ymd(2025, 3, 1), "plan", false, 0});
  const auto t = at("2025-03-05T10:00:00Z");
  const auto s1 = store.create_session({"p1", "blob:v", "blob:k", t, std::string("key-1")});
  const auto again = store.create_session({"p1", "blob:v", "blob:k", t, std::string("key-1")});
  CHECK(again.replayed);
  CHECK(again.session_id == s1.session_id);
  const auto s2 = store.create_session({"p1", "blob:v", "blob:k", t, std::nullopt});
  CHECK(s2.session_id != s1.session_id);
  CHECK(store.list_sessions("p1").size() == 2);
  CHECK(store.pending_jobs() == 2);

  auto job = store.claim_job(t);
  REQUIRE(job.has_value());
  CHECK(job->session_id == s1.session_id);
  CHECK(job->attempts == 1);
  auto other = store.claim_job(t);
  REQUIRE(other.has_value());
  CHECK(other->session_id == s2.session_id);
  CHECK_FALSE(store.claim_job(t).has_value());

  store.fail_job(job->job_id, "boom", t + seconds{30}, 3);
  CHECK_FALSE(store.claim_job(t).has_value());
  auto retry = store.claim_job(t + seconds{30});
  REQUIRE(retry.has_value());
  CHECK(retry->attempts == 2);
  store.complete_job(retry->job_id);
  CHECK(store.requeue_running() == 1);

  CHECK_THROWS_AS(store.transition(s1.session_id, SessionStatus::reported, t), Error);
  store.transition(s1.session_id, SessionStatus::segmented, t, "2 segments");
  const auto r1 = store.add_report(s1.session_id, "{}", t);
  const auto r2 = store.add_report(s1.session_id, "{\"v\":2}", t);
  CHECK(r1.version == 1);
  CHECK(r2.version == 2);
  CHECK(store.find_session(s1.session_id)->report_id == r2.report_id);
  CHECK(store.find_report(r1.report_id)->body_json == "{}");
  const auto events = store.status_events(s1.session_id);
  REQUIRE(events.size() == 2);
  CHECK(events[0].status == SessionStatus::uploaded);
  CHECK(events[1].detail == "2 segments");
}

TEST_CASE("store reminders are unique per patient and date") {
  Store store(":memory:");
  store.migrate();
  store.insert_patient({"p1", ymd(2025, 3, 1), "plan", true, 0});
  ReminderRecord r{"p1", ymd(2025, 3, 11), at("2025-03-11T08:00:00Z"), std::nullopt, 0, ""};
  CHECK(store.add_reminder(r));
  CHECK_FALSE(store.add_reminder(r));
  CHECK(store.due_reminders(at("2025-03-11T07:00:00Z")).empty());
  CHECK(store.due_reminders(at("2025-03-11T08:00:00Z")).size() == 1);
  store.mark_reminder_sent("p1", r.local_date, at("2025-03-11T08:00:05Z"));
  CHECK(store.due_reminders(at("2025-03-11T09:00:00Z")).empty());

  store.add_token("tok", {Role::nurse, "n1"});
  CHECK(store.find_token("tok")->role == Role::nurse);
  CHECK_FALSE(store.find_token("nope").has_value());
}

TEST_CASE("service upload validation") {
  ServiceHarness h;
  const auto reg = h.service->register_patient({});
  CHECK_THROWS_AS(h.service->upload_session("ghost", "video", "kp"), NotFoundError);
  CHECK(h.service->store().list_all_sessions().empty());
  CHECK_THROWS_AS(h.service->upload_session(reg.patient.patient_id, "", "kp"), ValidationError);
  CHECK_THROWS_AS(h.service->upload_session(reg.patient.patient_id, "video", ""), ValidationError);
  const std::string huge(9 << 20, 'x');
  try {
    h.service->upload_session(reg.patient.patient_id, huge, "kp");
    FAIL("oversize upload accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::payload_too_large);
  }
  const auto a = h.service->upload_session(reg.patient.patient_id, "same", "kp");
  const auto b = h.service->upload_session(reg.patient.patient_id, "same", "kp");
  CHECK(a.session_id != b.session_id);

  NewPatient future;
  future.enrollment_date = ymd(2030, 1, 1);
  CHECK_THROWS_AS(h.service->register_patient(future), ValidationError);
}

TEST_CASE("service processes an upload through segmentation and report") {
  ServiceHarness h;
  const auto reg = h.service->register_patient({});
  const auto up = h.service->upload_session(reg.patient.patient_id, h.video_bytes(), testing::body25_stream_text(900));
  CHECK(h.service->drain() == 1);

  const auto s = h.service->store().find_session(up.session_id);
  REQUIRE(s.has_value());
  CHECK(s->status == SessionStatus::reported);
  const auto segs = segment::segments_from_json(s->segments_json);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].label == 3);
  CHECK(segs[1].label == 7);
  for (const auto& seg : segs) CHECK(std::filesystem::exists(seg.subclip_uri));

  const auto events = h.service->store().status_events(up.session_id);
  REQUIRE(events.size() == 3);
  CHECK(events[0].status == SessionStatus::uploaded);
  CHECK(events[1].status == SessionStatus::segmented);
  CHECK(events[2].status == SessionStatus::reported);

  const auto rep = report::report_from_json(h.service->store().find_report(s->report_id)->body_json);
  CHECK(rep.actions.size() == 2);
  CHECK_FALSE(rep.final_summary.empty());

  // Re-report adds a second immutable version.
  h.service->enqueue_reprocess(up.session_id);
  h.service->drain();
  CHECK(h.service->store().list_reports(up.session_id).size() == 2);
  CHECK(h.service->store().find_session(up.session_id)->status == SessionStatus::reported);

  const auto other = h.service->upload_session(reg.patient.patient_id, "x", "y");
  try {
    h.service->enqueue_reprocess(other.session_id);
    FAIL("reprocess of an unsegmented session accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::conflict);
  }
}

TEST_CASE("unreadable media fails the session permanently") {
  ServiceHarness h;
  const auto reg = h.service->register_patient({});
  const auto up = h.service->upload_session(reg.patient.patient_id, "not a video", testing::body25_stream_text(10));
  h.service->drain();
  const auto s = h.service->store().find_session(up.session_id);
  CHECK(s->status == SessionStatus::failed);
  CHECK(h.service->store().pending_jobs() == 0);
}

TEST_CASE("provider failures are recorded in the stored report") {
  ServiceHarness h;
  int calls = 0;
  // Rebuild with a client that always fails.
  ServiceConfig cfg = h.service->config();
  h.service.reset();
  h.llm = std::make_unique<llm::MockLlmClient>("down", [&](const llm::LlmRequest&) -> std::string {
    ++calls;
    throw llm::ProviderError("unavailable", false, 400);
  });
  Pipeline p;
  p.classifier = &h.stub;
  p.catalog = &h.catalog;
  p.llm = h.llm.get();
  p.retry.sleep = [](milliseconds) {};
  h.service = std::make_unique<RehabService>(cfg, p, [&h] { return h.now; }, h.sender);
  const auto reg = h.service->register_patient({});
  const auto up = h.service->upload_session(reg.patient.patient_id, h.video_bytes(300), testing::body25_stream_text(300));
  h.service->drain();
  // Action failures are recorded in the report; the final call fails too,
  // which still yields a stored report.
  const auto s = h.service->store().find_session(up.session_id);
  CHECK(s->status == SessionStatus::reported);
  const auto rep = report::report_from_json(h.service->store().find_report(s->report_id)->body_json);
  CHECK(rep.final_failed);
  CHECK(calls > 0);
}

TEST_CASE("reminders are scheduled once per day for opted-in patients") {
  ServiceHarness h;
  NewPatient in;
  in.reminder_opt_in = true;
  in.patient_id = "opt-in";
  h.service->register_patient(in);
  NewPatient out;
  out.patient_id = "opt-out";
  h.service->register_patient(out);

  const auto evening = at("2025-03-10T20:00:00Z");
  CHECK(h.service->schedule_reminders(evening) == 1);
  CHECK(h.service->schedule_reminders(evening) == 0);
  CHECK(h.service->dispatch_due(evening) == 0);
  const auto morning = at("2025-03-11T08:00:00Z");
  h.sender->fail_next = true;
  CHECK(h.service->dispatch_due(morning) == 0);
  CHECK(h.service->dispatch_due(morning + seconds{60}) == 1);
  CHECK(h.service->dispatch_due(morning + seconds{120}) == 0);
  CHECK(h.sender->delivered == std::vector<std::string>{"opt-in"});
}

TEST_CASE("service adherence reads stored sessions") {
  ServiceHarness h;
  NewPatient p;
  p.patient_id = "a";
  p.enrollment_date = ymd(2025, 3, 8);
  h.service->register_patient(p);
  h.service->upload_session("a", "v1", "k");
  h.now = at("2025-03-10T18:00:00Z");
  h.service->upload_session("a", "v2", "k");
  const auto s = h.service->adherence(ymd(2025, 3, 8), ymd(2025, 3, 10));
  CHECK(s.per_patient.at(0).sessions == 2);
  CHECK(s.per_patient.at(0).enrolled_days == 3);
  CHECK(s.avg_frequency == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("http api end to end") {
  ServiceHarness h;
  const int port = h.service->bind("127.0.0.1", 0);
  h.service->serve_in_background();
  httplib::Client cli("127.0.0.1", port);
  const httplib::Headers nurse = {{"Authorization", "Bearer nurse-secret"}};

  CHECK(cli.Get("/patients")->status == 401);
  auto res = cli.Post("/patients", nurse, R"({"patient_id": "p-http", "reminder_opt_in": true})", "application/json");
  REQUIRE(res->status == 201);
  const std::string token = json::parse(res->body).at("token");
  const httplib::Headers patient = {{"Authorization", "Bearer " + token}};
  CHECK(cli.Get("/patients", patient)->status == 403);
  CHECK(cli.Post("/patients", nurse, R"({"enrollment_date": "soon"})", "application/json")->status == 422);

  httplib::MultipartFormDataItems items = {
      {"video", h.video_bytes(), "session.avi", "video/x-msvideo"},
      {"keypoints", testing::body25_stream_text(900), "kp.jsonl", "application/x-ndjson"}};
  httplib::Headers upload_headers = patient;
  upload_headers.emplace("Idempotency-Key", "abc");
  res = cli.Post("/sessions", upload_headers, items);
  REQUIRE(res->status == 202);
  const std::string sid = json::parse(res->body).at("session_id");
  res = cli.Post("/sessions", upload_headers, items);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body).at("session_id") == sid);

  h.service->drain();
  res = cli.Get("/sessions/" + sid, patient);
  REQUIRE(res->status == 200);
  const json session = json::parse(res->body);
  CHECK(session.at("status") == "reported");
  CHECK(session.at("status_history").size() == 3);
  REQUIRE(session.at("segments").size() == 2);
  const std::string clip_url = session.at("segments")[0].at("clip_url");
  res = cli.Get(clip_url, patient);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "video/x-msvideo");

  const std::string rid = session.at("report_id");
  res = cli.Get("/reports/" + rid, patient);
  REQUIRE(res->status == 200);
  CHECK(json::parse(res->body).at("report").at("actions").size() == 2);

  json fb = {{"scores", {{"accuracy", 8}, {"completeness", 7}, {"practicability", 9}, {"safety", 9},
                         {"language_quality", 8}}},
             {"text", "clear"}};
  CHECK(cli.Post("/reports/" + rid + "/feedback", patient, fb.dump(), "application/json")->status == 403);
  CHECK(cli.Post("/reports/" + rid + "/feedback", nurse, fb.dump(), "application/json")->status == 201);
  fb["scores"]["style"] = 5;
  CHECK(cli.Post("/reports/" + rid + "/feedback", nurse, fb.dump(), "application/json")->status == 422);
  fb["scores"].erase("style");
  fb["scores"]["safety"] = 12;
  res = cli.Post("/reports/" + rid + "/feedback", nurse, fb.dump(), "application/json");
  CHECK(res->status == 422);
  CHECK(json::parse(res->body).at("error").at("code") == "validation_error");
  CHECK(json::parse(cli.Get("/reports/" + rid, nurse)->body).at("feedback").size() == 1);

  CHECK(cli.Get("/sessions/missing", nurse)->status == 404);
  res = cli.Post("/patients", nurse, R"({"patient_id": "other"})", "application/json");
  const std::string other_token = json::parse(res->body).at("token");
  CHECK(cli.Get("/sessions/" + sid, {{"Authorization", "Bearer " + other_token}})->status == 403);

  res = cli.Get("/patients/p-http/sessions", patient);
  CHECK(json::parse(res->body).at("sessions").size() == 1);
  res = cli.Get("/patients?offset=0&limit=1", nurse);
  CHECK(json::parse(res->body).at("items").size() == 1);
  CHECK(json::parse(res->body).at("total") == 2);

  res = cli.Post("/framing/check", patient,
                 R"({"left_shoulder": [300, 200, 0.9], "right_shoulder": {"x": 340, "y": 200, "confidence": 0.1},
                     "image_size": [640, 480]})",
                 "application/json");
  CHECK(json::parse(res->body).at("status") == "out_of_frame");

  res = cli.Post("/patients/p-http/reminder-optin", patient, R"({"opt_in": false})", "application/json");
  CHECK(json::parse(res->body).at("reminder_opt_in") == false);

  res = cli.Get("/analytics/adherence?start=2025-03-10&end=2025-03-10", nurse);
  REQUIRE(res->status == 200);
  CHECK(json::parse(res->body).at("total_sessions") == 1);

  h.service->stop();
}
