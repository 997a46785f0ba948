#include "rehab/rehab_service.hpp"

#include "rehab/error.hpp"
#include "rehab/keypoint_io.hpp"
#include "rehab/media.hpp"
#include "rehab/report_generator.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <set>

namespace rehab::service {

using nlohmann::json;
using namespace std::chrono;

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig c;
  if (const char* v = std::getenv("REHAB_DATA_DIR")) c.data_dir = v;
  if (const char* v = std::getenv("REHAB_MAX_UPLOAD_MB")) c.max_upload_bytes = std::stoull(v) << 20;
  if (const char* v = std::getenv("REHAB_WORKERS")) c.worker_threads = std::max<std::size_t>(1, std::stoull(v));
  if (const char* v = std::getenv("REHAB_NURSE_TOKEN")) c.nurse_token = v;
  return c;
}

TimePoint system_now() { return floor<seconds>(system_clock::now()); }

void LoggingReminderSender::send(const PatientRecord& patient, const ReminderRecord& reminder) {
  spdlog::info("reminder for patient {}: exercise session planned for {} (local date {})", patient.patient_id,
               format_time(reminder.scheduled_at), format_date(reminder.local_date));
}

struct RehabService::Http {
  httplib::Server server;
  int port = -1;
};

RehabService::RehabService(ServiceConfig config, Pipeline pipeline, Clock clock,
                           std::shared_ptr<ReminderSender> reminders)
    : config_(std::move(config)),
      pipeline_(std::move(pipeline)),
      clock_(std::move(clock)),
      reminders_(std::move(reminders)),
      http_(std::make_unique<Http>()) {
  std::filesystem::create_directories(config_.data_dir);
  store_ = std::make_unique<Store>(config_.data_dir / "rehab.db");
  store_->migrate();
  if (const int n = store_->requeue_running(); n > 0) spdlog::info("requeued {} interrupted job(s)", n);
  blobs_ = std::make_unique<BlobStore>(config_.data_dir / "blobs");
  install_routes();
}

RehabService::~RehabService() { stop(); }

RegisteredPatient RehabService::register_patient(const NewPatient& p) {
  PatientRecord rec;
  rec.patient_id = p.patient_id.value_or(random_id("p_"));
  if (rec.patient_id.empty()) throw ValidationError("patient_id", "must not be empty");
  const Date today{floor<days>(clock_())};
  rec.enrollment_date = p.enrollment_date.value_or(today);
  if (sys_days{rec.enrollment_date} > sys_days{today} + days{1}) {
    throw ValidationError("enrollment_date", format_date(rec.enrollment_date) + " is in the future");
  }
  if (p.utc_offset_minutes < -14 * 60 || p.utc_offset_minutes > 14 * 60) {
    throw ValidationError("utc_offset_minutes", "must lie within +-14 hours");
  }
  rec.exercise_plan_id = p.exercise_plan_id;
  rec.reminder_opt_in = p.reminder_opt_in;
  rec.utc_offset_minutes = p.utc_offset_minutes;
  store_->insert_patient(rec);
  return {rec, issue_token({Role::patient, rec.patient_id})};
}

std::string RehabService::issue_token(const Principal& principal) {
  std::string token = random_id("t_") + random_id("");
  store_->add_token(token, principal);
  return token;
}

std::optional<Principal> RehabService::authenticate(std::string_view bearer_token) {
  if (bearer_token.empty()) return std::nullopt;
  if (!config_.nurse_token.empty() && bearer_token == config_.nurse_token) return Principal{Role::nurse, "nurse"};
  return store_->find_token(std::string(bearer_token));
}

UploadOutcome RehabService::upload_session(const std::string& patient_id, std::string_view video_bytes,
                                           std::string_view keypoints_bytes, std::optional<std::string> key) {
  if (!store_->find_patient(patient_id)) throw NotFoundError("patient '" + patient_id + "' not found");
  if (video_bytes.empty()) throw ValidationError("video", "empty upload");
  if (video_bytes.size() > config_.max_upload_bytes) {
    throw Error(ErrorCode::payload_too_large, "video of " + std::to_string(video_bytes.size()) +
                                                  " bytes exceeds the limit of " +
                                                  std::to_string(config_.max_upload_bytes) + " bytes");
  }
  if (keypoints_bytes.empty()) throw ValidationError("keypoints", "pose stream is required");
  if (key && key->empty()) key.reset();
  NewSession s;
  s.patient_id = patient_id;
  s.video_uri = blobs_->put(video_bytes, "avi");
  s.keypoints_uri = blobs_->put(keypoints_bytes, "jsonl");
  s.upload_time = clock_();
  s.idempotency_key = std::move(key);
  return store_->create_session(s);
}

std::int64_t RehabService::enqueue_reprocess(const std::string& session_id) {
  auto s = store_->find_session(session_id);
  if (!s) throw NotFoundError("session '" + session_id + "' not found");
  if (s->status != SessionStatus::segmented && s->status != SessionStatus::reported) {
    throw Error(ErrorCode::conflict, "session '" + session_id + "' is " + to_string(s->status) +
                                         "; only segmented or reported sessions can be re-reported");
  }
  return store_->enqueue(session_id, JobKind::report, clock_());
}

void RehabService::segment_session(const SessionRecord& s) {
  if (!pipeline_.classifier) throw ConfigError("no window classifier configured");
  media::VideoFile video(blobs_->path_of(s.video_uri));
  const auto pose = pose::read_pose_stream(blobs_->path_of(s.keypoints_uri));
  const auto preds = segment::predict_windows(video, pose, pipeline_.layout, *pipeline_.classifier,
                                              config_.predict_options);
  auto segs = segment::segment_video(s.session_id, preds, video.info().frame_count, config_.segment_options);
  segment::extract_subclips(video, segs, config_.data_dir / "clips" / s.session_id);
  store_->set_segments(s.session_id, segment::segments_to_json(segs));
  store_->transition(s.session_id, SessionStatus::segmented, clock_(),
                     std::to_string(segs.size()) + " segment(s) from " + std::to_string(preds.size()) + " window(s)");
}

void RehabService::report_session(const SessionRecord& s) {
  if (!pipeline_.catalog || !pipeline_.llm) throw ConfigError("report generation needs a catalog and an llm client");
  report::SessionInput input;
  input.session_id = s.session_id;
  input.segments = segment::segments_from_json(s.segments_json);
  input.open_clip = [](const segment::ActionSegment& seg) -> std::unique_ptr<media::VideoSource> {
    return std::make_unique<media::VideoFile>(seg.subclip_uri);
  };
  report::ReportContext ctx;
  ctx.catalog = pipeline_.catalog;
  ctx.knowledge = pipeline_.knowledge;
  ctx.client = pipeline_.llm;
  ctx.retry = pipeline_.retry;
  ctx.transcript = pipeline_.transcript;
  const auto rep = report::generate_report(input, ctx, {config_.report_parallel_actions});
  const auto rec = store_->add_report(s.session_id, report::report_to_json(rep), clock_());
  if (s.status == SessionStatus::segmented) {
    store_->transition(s.session_id, SessionStatus::reported, clock_(), "report " + rec.report_id);
  }
}

void RehabService::process(const JobRecord& job) {
  auto s = store_->find_session(job.session_id);
  if (!s) throw NotFoundError("session '" + job.session_id + "' not found");
  if (job.kind == JobKind::process) {
    // Each step checks the stored status first, so a replayed job resumes
    // where the previous attempt stopped.
    if (s->status == SessionStatus::uploaded) {
      segment_session(*s);
      s = store_->find_session(job.session_id);
    }
    if (s->status == SessionStatus::segmented) report_session(*s);
    return;
  }
  if (s->status == SessionStatus::segmented || s->status == SessionStatus::reported) report_session(*s);
}

bool RehabService::run_one_job() {
  auto job = store_->claim_job(clock_());
  if (!job) return false;
  try {
    process(*job);
    store_->complete_job(job->job_id);
  } catch (const std::exception& e) {
    const auto* err = dynamic_cast<const Error*>(&e);
    const auto code = err ? err->code() : ErrorCode::internal;
    const bool transient = code == ErrorCode::provider || code == ErrorCode::internal;
    const bool give_up = !transient || job->attempts >= config_.max_job_attempts;
    spdlog::error("job {} ({} for session {}) attempt {} failed: {}", job->job_id, to_string(job->kind),
                  job->session_id, job->attempts, e.what());
    store_->fail_job(job->job_id, e.what(), clock_() + config_.job_retry_delay, give_up ? 0 : config_.max_job_attempts);
    if (give_up) {
      auto s = store_->find_session(job->session_id);
      if (s && s->status != SessionStatus::failed && s->status != SessionStatus::reported) {
        store_->transition(job->session_id, SessionStatus::failed, clock_(),
                           std::string(rehab::to_string(code)) + ": " + e.what());
      }
    }
  }
  return true;
}

std::size_t RehabService::drain() {
  std::size_t n = 0;
  while (run_one_job()) ++n;
  return n;
}

std::size_t RehabService::schedule_reminders(TimePoint now) {
  std::size_t created = 0;
  for (const auto& p : store_->list_patients()) {
    if (!p.reminder_opt_in) continue;
    const auto slot = next_reminder(now, p.utc_offset_minutes);
    ReminderRecord r;
    r.patient_id = p.patient_id;
    r.local_date = slot.local_date;
    r.scheduled_at = slot.at;
    if (store_->add_reminder(r)) ++created;
  }
  return created;
}

std::size_t RehabService::dispatch_due(TimePoint now) {
  std::size_t sent = 0;
  for (const auto& r : store_->due_reminders(now)) {
    const auto p = store_->find_patient(r.patient_id);
    if (!p || !p->reminder_opt_in) continue;
    try {
      reminders_->send(*p, r);
      store_->mark_reminder_sent(r.patient_id, r.local_date, now);
      ++sent;
    } catch (const std::exception& e) {
      spdlog::warn("reminder for {} on {} failed: {}", r.patient_id, format_date(r.local_date), e.what());
      store_->mark_reminder_failed(r.patient_id, r.local_date, e.what());
    }
  }
  return sent;
}

FeedbackRecord RehabService::submit_feedback(const std::string& report_id, const std::string& nurse_id,
                                             const FeedbackScores& scores, const std::string& text) {
  validate_feedback(scores);
  if (!store_->find_report(report_id)) throw NotFoundError("report '" + report_id + "' not found");
  FeedbackRecord f;
  f.report_id = report_id;
  f.nurse_id = nurse_id;
  f.scores = scores;
  f.text = text;
  f.created_at = clock_();
  return store_->add_feedback(f);
}

AdherenceStats RehabService::adherence(Date start, Date end) {
  std::vector<PatientAdherenceInput> inputs;
  for (const auto& p : store_->list_patients()) {
    PatientAdherenceInput in{p.patient_id, p.enrollment_date, {}, p.utc_offset_minutes};
    for (const auto& s : store_->list_sessions(p.patient_id)) in.session_times.push_back(s.upload_time);
    inputs.push_back(std::move(in));
  }
  return adherence_stats(inputs, start, end);
}

void RehabService::worker_loop() {
  while (!stopping_) {
    bool worked = false;
    try {
      worked = run_one_job();
    } catch (const std::exception& e) {
      spdlog::error("worker: {}", e.what());
    }
    if (!worked) std::this_thread::sleep_for(config_.worker_poll);
  }
}

void RehabService::reminder_loop() {
  auto next = steady_clock::now();
  while (!stopping_) {
    if (steady_clock::now() >= next) {
      try {
        const auto now = clock_();
        schedule_reminders(now);
        dispatch_due(now);
      } catch (const std::exception& e) {
        spdlog::error("reminder loop: {}", e.what());
      }
      next = steady_clock::now() + config_.reminder_interval;
    }
    std::this_thread::sleep_for(milliseconds(100));
  }
}

void RehabService::start_workers() {
  for (std::size_t i = 0; i < config_.worker_threads; ++i) threads_.emplace_back([this] { worker_loop(); });
  if (config_.reminder_interval.count() > 0) threads_.emplace_back([this] { reminder_loop(); });
}

int RehabService::bind(const std::string& host, int port) {
  if (port == 0) {
    http_->port = http_->server.bind_to_any_port(host);
  } else {
    http_->port = http_->server.bind_to_port(host, port) ? port : -1;
  }
  if (http_->port < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  return http_->port;
}

void RehabService::serve() { http_->server.listen_after_bind(); }

void RehabService::serve_in_background() {
  threads_.emplace_back([this] { serve(); });
  http_->server.wait_until_ready();
}

void RehabService::stop() {
  stopping_ = true;
  http_->server.stop();
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  threads_.clear();
}

// ---- HTTP -------------------------------------------------------------------

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation:
    case ErrorCode::structural:
    case ErrorCode::media:
    case ErrorCode::dependency: return 422;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::unauthorized: return 401;
    case ErrorCode::forbidden: return 403;
    case ErrorCode::payload_too_large: return 413;
    case ErrorCode::provider: return 502;
    case ErrorCode::configuration:
    case ErrorCode::internal: return 500;
  }
  return 500;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message, const std::string& field = {}) {
  json err = {{"code", rehab::to_string(code)}, {"message", message}};
  if (!field.empty()) err["field"] = field;
  send_json(res, http_status(code), {{"error", err}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ValidationError("body", std::string("invalid JSON: ") + e.what());
  }
}

std::string bearer(const httplib::Request& req) {
  const auto h = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  if (h.size() <= prefix.size() || h.compare(0, prefix.size(), prefix) != 0) return {};
  return h.substr(prefix.size());
}

json patient_json(const PatientRecord& p) {
  return {{"patient_id", p.patient_id},
          {"enrollment_date", format_date(p.enrollment_date)},
          {"exercise_plan_id", p.exercise_plan_id},
          {"reminder_opt_in", p.reminder_opt_in},
          {"utc_offset_minutes", p.utc_offset_minutes}};
}

json session_json(const SessionRecord& s, const std::vector<StatusEvent>& events,
                  const std::vector<ReportRecord>& reports) {
  json history = json::array();
  for (const auto& e : events) {
    history.push_back({{"status", to_string(e.status)}, {"at", format_time(e.at)}, {"detail", e.detail}});
  }
  json segments = json::array();
  if (!s.segments_json.empty()) {
    for (auto seg : json::parse(s.segments_json)) {
      seg["clip_url"] = "/sessions/" + s.session_id + "/clips/" + seg.value("segment_id", std::string{});
      seg.erase("subclip_uri");
      segments.push_back(std::move(seg));
    }
  }
  json versions = json::array();
  for (const auto& r : reports) versions.push_back({{"report_id", r.report_id}, {"version", r.version}});
  return {{"session_id", s.session_id},
          {"patient_id", s.patient_id},
          {"upload_time", format_time(s.upload_time)},
          {"status", to_string(s.status)},
          {"error", s.error},
          {"status_history", history},
          {"segments", segments},
          {"report_id", s.report_id.empty() ? json(nullptr) : json(s.report_id)},
          {"report_versions", versions}};
}

json feedback_json(const FeedbackRecord& f) {
  json scores = json::object();
  for (auto d : kFeedbackDimensions) scores[std::string(d)] = f.scores[d];
  return {{"feedback_id", f.feedback_id}, {"report_id", f.report_id}, {"nurse_id", f.nurse_id},
          {"scores", scores},             {"text", f.text},           {"created_at", format_time(f.created_at)}};
}

json adherence_json(const AdherenceStats& a) {
  json per = json::array();
  for (const auto& p : a.per_patient) {
    per.push_back({{"patient_id", p.patient_id},
                   {"sessions", p.sessions},
                   {"enrolled_days", p.enrolled_days},
                   {"frequency", p.frequency}});
  }
  return {{"patients", a.patients},
          {"total_sessions", a.total_sessions},
          {"avg_sessions", a.avg_sessions},
          {"avg_frequency", a.avg_frequency},
          {"per_patient", per}};
}

ShoulderPoint shoulder_from(const json& j, const char* field) {
  try {
    if (j.is_array()) return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
    return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("confidence").get<double>()};
  } catch (const json::exception&) {
    throw ValidationError(field, "expected [x, y, confidence] or {x, y, confidence}");
  }
}

}  // namespace

void RehabService::install_routes() {
  auto& srv = http_->server;
  srv.set_payload_max_length(config_.max_upload_bytes + (std::size_t{16} << 20));

  using Handler = std::function<void(const httplib::Request&, httplib::Response&, const Principal&)>;
  auto guarded = [this](Handler fn) {
    return [this, fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
      try {
        const auto principal = authenticate(bearer(req));
        if (!principal) {
          send_error(res, ErrorCode::unauthorized, "missing or unknown bearer token");
          return;
        }
        fn(req, res, *principal);
      } catch (const ValidationError& e) {
        send_error(res, e.code(), e.what(), e.field());
      } catch (const Error& e) {
        send_error(res, e.code(), e.what());
      } catch (const json::exception& e) {
        send_error(res, ErrorCode::validation, e.what());
      } catch (const std::exception& e) {
        spdlog::error("{} {}: {}", req.method, req.path, e.what());
        send_error(res, ErrorCode::internal, "internal error");
      }
    };
  };
  auto require_nurse = [](const Principal& p) {
    if (p.role != Role::nurse) throw Error(ErrorCode::forbidden, "nurse role required");
  };
  auto require_access = [](const Principal& p, const std::string& patient_id) {
    if (p.role == Role::patient && p.subject_id != patient_id) {
      throw Error(ErrorCode::forbidden, "patients may only access their own records");
    }
  };
  auto session_or_404 = [this](const std::string& id) {
    auto s = store_->find_session(id);
    if (!s) throw NotFoundError("session '" + id + "' not found");
    return *s;
  };

  srv.Post("/patients", guarded([this, require_nurse](const auto& req, auto& res, const Principal& p) {
             require_nurse(p);
             const json body = parse_body(req);
             NewPatient np;
             if (body.contains("patient_id")) np.patient_id = body["patient_id"].get<std::string>();
             if (body.contains("enrollment_date")) {
               np.enrollment_date = parse_date(body["enrollment_date"].get<std::string>(), "enrollment_date");
             }
             np.exercise_plan_id = body.value("exercise_plan_id", np.exercise_plan_id);
             np.reminder_opt_in = body.value("reminder_opt_in", false);
             np.utc_offset_minutes = body.value("utc_offset_minutes", 0);
             const auto reg = register_patient(np);
             json out = patient_json(reg.patient);
             out["token"] = reg.token;
             send_json(res, 201, out);
           }));

  srv.Get("/patients", guarded([this, require_nurse](const auto& req, auto& res, const Principal& p) {
            require_nurse(p);
            const auto all = store_->list_patients();
            const std::size_t offset = req.has_param("offset") ? std::stoull(req.get_param_value("offset")) : 0;
            const std::size_t limit = req.has_param("limit") ? std::stoull(req.get_param_value("limit")) : 100;
            json items = json::array();
            for (std::size_t i = offset; i < all.size() && i < offset + limit; ++i) {
              json j = patient_json(all[i]);
              j["session_count"] = store_->list_sessions(all[i].patient_id).size();
              items.push_back(std::move(j));
            }
            send_json(res, 200, {{"total", all.size()}, {"offset", offset}, {"items", items}});
          }));

  srv.Post("/sessions", guarded([this, require_access](const httplib::Request& req, auto& res, const Principal& p) {
             if (!req.is_multipart_form_data()) {
               throw ValidationError("body", "expected multipart/form-data with video and keypoints parts");
             }
             std::string patient_id = p.role == Role::patient ? p.subject_id : std::string{};
             if (req.has_file("patient_id")) patient_id = req.get_file_value("patient_id").content;
             if (patient_id.empty()) throw ValidationError("patient_id", "required");
             require_access(p, patient_id);
             if (!req.has_file("video")) throw ValidationError("video", "missing video part");
             if (!req.has_file("keypoints")) throw ValidationError("keypoints", "missing keypoints part");
             std::optional<std::string> key;
             if (req.has_header("Idempotency-Key")) key = req.get_header_value("Idempotency-Key");
             const auto out = upload_session(patient_id, req.get_file_value("video").content,
                                             req.get_file_value("keypoints").content, key);
             send_json(res, out.replayed ? 200 : 202,
                       {{"session_id", out.session_id}, {"status", "uploaded"}, {"replayed", out.replayed}});
           }));

  srv.Get(R"(/sessions/([^/]+))", guarded([this, require_access, session_or_404](const auto& req, auto& res,
                                                                                const Principal& p) {
            const auto s = session_or_404(req.matches[1]);
            require_access(p, s.patient_id);
            send_json(res, 200, session_json(s, store_->status_events(s.session_id), store_->list_reports(s.session_id)));
          }));

  srv.Get(R"(/sessions/([^/]+)/clips/([^/]+))",
          guarded([this, require_access, session_or_404](const auto& req, auto& res, const Principal& p) {
            const auto s = session_or_404(req.matches[1]);
            require_access(p, s.patient_id);
            const std::string seg_id = req.matches[2];
            if (s.segments_json.empty()) throw NotFoundError("session has no segments yet");
            for (const auto& seg : segment::segments_from_json(s.segments_json)) {
              if (seg.segment_id != seg_id) continue;
              std::ifstream in(seg.subclip_uri, std::ios::binary);
              if (!in) throw NotFoundError("clip file for " + seg_id + " missing");
              std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
              res.set_content(std::move(bytes), "video/x-msvideo");
              return;
            }
            throw NotFoundError("segment '" + seg_id + "' not found");
          }));

  srv.Get(R"(/patients/([^/]+)/sessions)", guarded([this, require_access](const auto& req, auto& res,
                                                                           const Principal& p) {
            const std::string pid = req.matches[1];
            require_access(p, pid);
            if (!store_->find_patient(pid)) throw NotFoundError("patient '" + pid + "' not found");
            json items = json::array();
            for (const auto& s : store_->list_sessions(pid)) {
              items.push_back({{"session_id", s.session_id},
                               {"upload_time", format_time(s.upload_time)},
                               {"status", to_string(s.status)},
                               {"report_id", s.report_id.empty() ? json(nullptr) : json(s.report_id)}});
            }
            send_json(res, 200, {{"patient_id", pid}, {"sessions", items}});
          }));

  srv.Get(R"(/reports/([^/]+))", guarded([this, require_access](const auto& req, auto& res, const Principal& p) {
            const std::string rid = req.matches[1];
            const auto r = store_->find_report(rid);
            if (!r) throw NotFoundError("report '" + rid + "' not found");
            const auto s = store_->find_session(r->session_id);
            require_access(p, s->patient_id);
            json fb = json::array();
            for (const auto& f : store_->list_feedback(rid)) fb.push_back(feedback_json(f));
            send_json(res, 200,
                      {{"report_id", r->report_id},
                       {"session_id", r->session_id},
                       {"patient_id", s->patient_id},
                       {"version", r->version},
                       {"created_at", format_time(r->created_at)},
                       {"report", json::parse(r->body_json)},
                       {"feedback", fb}});
          }));

  srv.Post(R"(/reports/([^/]+)/feedback)", guarded([this, require_nurse](const auto& req, auto& res,
                                                                          const Principal& p) {
             require_nurse(p);
             const json body = parse_body(req);
             if (!body.contains("scores") || !body["scores"].is_object()) {
               throw ValidationError("scores", "object with the five dimensions required");
             }
             FeedbackScores scores;
             for (auto d : kFeedbackDimensions) {
               const std::string name(d);
               if (!body["scores"].contains(name)) throw ValidationError(name, "missing score");
               const auto& v = body["scores"][name];
               if (!v.is_number_integer()) throw ValidationError(name, "score must be an integer");
               scores[d] = v.get<int>();
             }
             for (const auto& [k, v] : body["scores"].items()) {
               if (std::find(kFeedbackDimensions.begin(), kFeedbackDimensions.end(), k) == kFeedbackDimensions.end()) {
                 throw ValidationError(k, "unknown feedback dimension");
               }
             }
             const auto f = submit_feedback(req.matches[1], body.value("nurse_id", p.subject_id), scores,
                                            body.value("text", std::string{}));
             send_json(res, 201, feedback_json(f));
           }));

  srv.Post(R"(/patients/([^/]+)/reminder-optin)", guarded([this, require_access](const auto& req, auto& res,
                                                                                  const Principal& p) {
             const std::string pid = req.matches[1];
             require_access(p, pid);
             const json body = parse_body(req);
             if (!body.contains("opt_in") || !body["opt_in"].is_boolean()) {
               throw ValidationError("opt_in", "boolean required");
             }
             std::optional<int> offset;
             if (body.contains("utc_offset_minutes")) offset = body["utc_offset_minutes"].get<int>();
             store_->set_reminder_opt_in(pid, body["opt_in"].get<bool>(), offset);
             send_json(res, 200, patient_json(*store_->find_patient(pid)));
           }));

  srv.Get("/analytics/adherence", guarded([this, require_nurse](const auto& req, auto& res, const Principal& p) {
            require_nurse(p);
            const auto patients = store_->list_patients();
            if (patients.empty()) throw ValidationError("patients", "no enrolled patients");
            Date start = patients.front().enrollment_date;
            for (const auto& pt : patients) {
              if (sys_days{pt.enrollment_date} < sys_days{start}) start = pt.enrollment_date;
            }
            Date end{floor<days>(clock_())};
            if (req.has_param("start")) start = parse_date(req.get_param_value("start"), "start");
            if (req.has_param("end")) end = parse_date(req.get_param_value("end"), "end");
            json out = adherence_json(adherence(start, end));
            out["start"] = format_date(start);
            out["end"] = format_date(end);
            send_json(res, 200, out);
          }));

  srv.Post("/framing/check", guarded([](const auto& req, auto& res, const Principal&) {
             const json body = parse_body(req);
             if (!body.contains("left_shoulder")) throw ValidationError("left_shoulder", "required");
             if (!body.contains("right_shoulder")) throw ValidationError("right_shoulder", "required");
             if (!body.contains("image_size")) throw ValidationError("image_size", "required [width, height]");
             const auto size = body["image_size"];
             const auto r = framing_check(shoulder_from(body["left_shoulder"], "left_shoulder"),
                                          shoulder_from(body["right_shoulder"], "right_shoulder"),
                                          size.at(0).get<int>(), size.at(1).get<int>(),
                                          body.value("confidence_floor", kFramingConfidenceFloor));
             send_json(res, 200, {{"status", to_string(r.status)}, {"reason", r.reason}});
           }));
}

}  // namespace rehab::service
