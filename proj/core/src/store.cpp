#include "rehab/store.hpp"

#include "rehab/error.hpp"
#include "rehab/tokenizer.hpp"

#include <sqlite3.h>

#include <random>

namespace rehab::service {

namespace {

constexpr int kSchemaVersion = 1;

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS patients (
  patient_id TEXT PRIMARY KEY,
  enrollment_date TEXT NOT NULL,
  exercise_plan_id TEXT NOT NULL,
  reminder_opt_in INTEGER NOT NULL DEFAULT 0,
  utc_offset_minutes INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS sessions (
  session_id TEXT PRIMARY KEY,
  patient_id TEXT NOT NULL REFERENCES patients(patient_id),
  upload_time TEXT NOT NULL,
  video_uri TEXT NOT NULL,
  keypoints_uri TEXT NOT NULL,
  status TEXT NOT NULL,
  error TEXT NOT NULL DEFAULT '',
  segments_json TEXT NOT NULL DEFAULT '',
  report_id TEXT NOT NULL DEFAULT ''
);
CREATE INDEX IF NOT EXISTS sessions_by_patient ON sessions(patient_id, upload_time);
CREATE TABLE IF NOT EXISTS status_events (
  event_id INTEGER PRIMARY KEY AUTOINCREMENT,
  session_id TEXT NOT NULL REFERENCES sessions(session_id),
  status TEXT NOT NULL,
  at TEXT NOT NULL,
  detail TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS idempotency_keys (
  patient_id TEXT NOT NULL,
  key TEXT NOT NULL,
  session_id TEXT NOT NULL,
  PRIMARY KEY (patient_id, key)
);
CREATE TABLE IF NOT EXISTS reports (
  report_id TEXT PRIMARY KEY,
  session_id TEXT NOT NULL REFERENCES sessions(session_id),
  version INTEGER NOT NULL,
  body_json TEXT NOT NULL,
  created_at TEXT NOT NULL,
  UNIQUE (session_id, version)
);
CREATE TABLE IF NOT EXISTS feedback (
  feedback_id INTEGER PRIMARY KEY AUTOINCREMENT,
  report_id TEXT NOT NULL REFERENCES reports(report_id),
  nurse_id TEXT NOT NULL,
  accuracy INTEGER NOT NULL,
  completeness INTEGER NOT NULL,
  practicability INTEGER NOT NULL,
  safety INTEGER NOT NULL,
  language_quality INTEGER NOT NULL,
  text TEXT NOT NULL DEFAULT '',
  created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS jobs (
  job_id INTEGER PRIMARY KEY AUTOINCREMENT,
  session_id TEXT NOT NULL,
  kind TEXT NOT NULL,
  state TEXT NOT NULL,
  attempts INTEGER NOT NULL DEFAULT 0,
  available_at TEXT NOT NULL,
  last_error TEXT NOT NULL DEFAULT ''
);
CREATE INDEX IF NOT EXISTS jobs_by_state ON jobs(state, available_at);
CREATE TABLE IF NOT EXISTS reminders (
  patient_id TEXT NOT NULL,
  local_date TEXT NOT NULL,
  scheduled_at TEXT NOT NULL,
  sent_at TEXT,
  attempts INTEGER NOT NULL DEFAULT 0,
  last_error TEXT NOT NULL DEFAULT '',
  PRIMARY KEY (patient_id, local_date)
);
CREATE TABLE IF NOT EXISTS tokens (
  token TEXT PRIMARY KEY,
  role TEXT NOT NULL,
  subject_id TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS knowledge_cache (
  id INTEGER PRIMARY KEY CHECK (id = 1),
  body_json TEXT NOT NULL
);
)sql";

[[noreturn]] void fail(sqlite3* db, const std::string& what) {
  throw Error(ErrorCode::internal, what + ": " + sqlite3_errmsg(db));
}

class Stmt {
 public:
  Stmt(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) fail(db, std::string("prepare '") + sql + "'");
  }
  ~Stmt() { sqlite3_finalize(stmt_); }
  Stmt(const Stmt&) = delete;
  Stmt& operator=(const Stmt&) = delete;

  Stmt& bind(int i, const std::string& v) {
    sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Stmt& bind(int i, const char* v) { return bind(i, std::string(v)); }
  Stmt& bind(int i, std::int64_t v) {
    sqlite3_bind_int64(stmt_, i, v);
    return *this;
  }
  Stmt& bind(int i, int v) { return bind(i, static_cast<std::int64_t>(v)); }
  Stmt& bind_null(int i) {
    sqlite3_bind_null(stmt_, i);
    return *this;
  }

  /// True while a row is available.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    if (rc == SQLITE_CONSTRAINT) throw Error(ErrorCode::conflict, sqlite3_errmsg(db_));
    fail(db_, "step");
  }
  void run() { while (step()) {} }

  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
             : std::string{};
  }
  std::int64_t int64(int col) const { return sqlite3_column_int64(stmt_, col); }
  bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    throw Error(ErrorCode::internal, std::string("sqlite: ") + msg);
  }
}

// BEGIN IMMEDIATE ... COMMIT, rolled back when the scope unwinds.
class Transaction {
 public:
  explicit Transaction(sqlite3* db) : db_(db) { exec(db_, "BEGIN IMMEDIATE"); }
  ~Transaction() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    exec(db_, "COMMIT");
    done_ = true;
  }

 private:
  sqlite3* db_;
  bool done_ = false;
};

const char* kSessionCols =
    "session_id, patient_id, upload_time, video_uri, keypoints_uri, status, error, segments_json, report_id";

SessionRecord read_session(const Stmt& s) {
  SessionRecord r;
  r.session_id = s.text(0);
  r.patient_id = s.text(1);
  r.upload_time = parse_time(s.text(2));
  r.video_uri = s.text(3);
  r.keypoints_uri = s.text(4);
  r.status = status_from_string(s.text(5));
  r.error = s.text(6);
  r.segments_json = s.text(7);
  r.report_id = s.text(8);
  return r;
}

PatientRecord read_patient(const Stmt& s) {
  return {s.text(0), parse_date(s.text(1)), s.text(2), s.int64(3) != 0, static_cast<int>(s.int64(4))};
}

ReportRecord read_report(const Stmt& s) {
  return {s.text(0), s.text(1), static_cast<int>(s.int64(2)), s.text(3), parse_time(s.text(4))};
}

ReminderRecord read_reminder(const Stmt& s) {
  ReminderRecord r;
  r.patient_id = s.text(0);
  r.local_date = parse_date(s.text(1));
  r.scheduled_at = parse_time(s.text(2));
  if (!s.is_null(3)) r.sent_at = parse_time(s.text(3));
  r.attempts = static_cast<int>(s.int64(4));
  r.last_error = s.text(5);
  return r;
}

JobKind job_kind_from(const std::string& s) {
  if (s == "process") return JobKind::process;
  if (s == "report") return JobKind::report;
  throw Error(ErrorCode::internal, "unknown job kind '" + s + "'");
}

}  // namespace

std::string to_string(JobKind kind) { return kind == JobKind::process ? "process" : "report"; }
std::string to_string(Role role) { return role == Role::patient ? "patient" : "nurse"; }

std::string random_id(std::string_view prefix) {
  static thread_local std::mt19937_64 rng{std::random_device{}() ^
                                          (static_cast<std::uint64_t>(std::random_device{}()) << 32)};
  return std::string(prefix) + text::hex64(rng()) + text::hex64(rng());
}

struct Store::Impl {
  sqlite3* db = nullptr;
  std::mutex mu;
};

Store::Store(const std::filesystem::path& path) : impl_(std::make_unique<Impl>()) {
  if (path != ":memory:" && path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (sqlite3_open_v2(path.string().c_str(), &impl_->db,
                      SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX, nullptr) != SQLITE_OK) {
    const std::string msg = impl_->db ? sqlite3_errmsg(impl_->db) : "out of memory";
    sqlite3_close(impl_->db);
    throw ConfigError("cannot open database " + path.string() + ": " + msg);
  }
  sqlite3_busy_timeout(impl_->db, 5000);
  exec(impl_->db, "PRAGMA foreign_keys = ON");
  if (path != ":memory:") exec(impl_->db, "PRAGMA journal_mode = WAL");
}

Store::~Store() { sqlite3_close(impl_->db); }

int Store::migrate() {
  std::lock_guard lock(impl_->mu);
  Stmt v(impl_->db, "PRAGMA user_version");
  v.step();
  const int current = static_cast<int>(v.int64(0));
  if (current > kSchemaVersion) {
    throw ConfigError("database schema version " + std::to_string(current) + " is newer than this build (" +
                      std::to_string(kSchemaVersion) + ")");
  }
  Transaction tx(impl_->db);
  exec(impl_->db, kSchema);
  exec(impl_->db, ("PRAGMA user_version = " + std::to_string(kSchemaVersion)).c_str());
  tx.commit();
  return kSchemaVersion;
}

void Store::insert_patient(const PatientRecord& p) {
  std::lock_guard lock(impl_->mu);
  try {
    Stmt s(impl_->db,
           "INSERT INTO patients (patient_id, enrollment_date, exercise_plan_id, reminder_opt_in, utc_offset_minutes) "
           "VALUES (?, ?, ?, ?, ?)");
    s.bind(1, p.patient_id).bind(2, format_date(p.enrollment_date)).bind(3, p.exercise_plan_id);
    s.bind(4, p.reminder_opt_in ? 1 : 0).bind(5, p.utc_offset_minutes).run();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::conflict) throw Error(ErrorCode::conflict, "patient '" + p.patient_id + "' exists");
    throw;
  }
}

std::optional<PatientRecord> Store::find_patient(const std::string& id) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db,
         "SELECT patient_id, enrollment_date, exercise_plan_id, reminder_opt_in, utc_offset_minutes FROM patients "
         "WHERE patient_id = ?");
  s.bind(1, id);
  if (!s.step()) return std::nullopt;
  return read_patient(s);
}

std::vector<PatientRecord> Store::list_patients() {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db,
         "SELECT patient_id, enrollment_date, exercise_plan_id, reminder_opt_in, utc_offset_minutes FROM patients "
         "ORDER BY patient_id");
  std::vector<PatientRecord> out;
  while (s.step()) out.push_back(read_patient(s));
  return out;
}

void Store::set_reminder_opt_in(const std::string& patient_id, bool opt_in, std::optional<int> offset) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db,
         "UPDATE patients SET reminder_opt_in = ?, utc_offset_minutes = COALESCE(?, utc_offset_minutes) "
         "WHERE patient_id = ?");
  s.bind(1, opt_in ? 1 : 0);
  if (offset) {
    s.bind(2, *offset);
  } else {
    s.bind_null(2);
  }
  s.bind(3, patient_id).run();
  if (sqlite3_changes(impl_->db) == 0) throw NotFoundError("patient '" + patient_id + "' not found");
}

UploadOutcome Store::create_session(const NewSession& n) {
  std::lock_guard lock(impl_->mu);
  Transaction tx(impl_->db);
  if (n.idempotency_key) {
    Stmt k(impl_->db, "SELECT session_id FROM idempotency_keys WHERE patient_id = ? AND key = ?");
    k.bind(1, n.patient_id).bind(2, *n.idempotency_key);
    if (k.step()) return {k.text(0), true};
  }
  const std::string id = random_id("s_");
  const std::string at = format_time(n.upload_time);
  Stmt s(impl_->db,
         "INSERT INTO sessions (session_id, patient_id, upload_time, video_uri, keypoints_uri, status) "
         "VALUES (?, ?, ?, ?, ?, 'uploaded')");
  s.bind(1, id).bind(2, n.patient_id).bind(3, at).bind(4, n.video_uri).bind(5, n.keypoints_uri).run();
  Stmt e(impl_->db, "INSERT INTO status_events (session_id, status, at) VALUES (?, 'uploaded', ?)");
  e.bind(1, id).bind(2, at).run();
  Stmt j(impl_->db, "INSERT INTO jobs (session_id, kind, state, available_at) VALUES (?, 'process', 'queued', ?)");
  j.bind(1, id).bind(2, at).run();
  if (n.idempotency_key) {
    Stmt k(impl_->db, "INSERT INTO idempotency_keys (patient_id, key, session_id) VALUES (?, ?, ?)");
    k.bind(1, n.patient_id).bind(2, *n.idempotency_key).bind(3, id).run();
  }
  tx.commit();
  return {id, false};
}

std::optional<SessionRecord> Store::find_session(const std::string& id) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, (std::string("SELECT ") + kSessionCols + " FROM sessions WHERE session_id = ?").c_str());
  s.bind(1, id);
  if (!s.step()) return std::nullopt;
  return read_session(s);
}

std::vector<SessionRecord> Store::list_sessions(const std::string& patient_id) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, (std::string("SELECT ") + kSessionCols +
                     " FROM sessions WHERE patient_id = ? ORDER BY upload_time, session_id")
                        .c_str());
  s.bind(1, patient_id);
  std::vector<SessionRecord> out;
  while (s.step()) out.push_back(read_session(s));
  return out;
}

std::vector<SessionRecord> Store::list_all_sessions() {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, (std::string("SELECT ") + kSessionCols + " FROM sessions ORDER BY upload_time, session_id").c_str());
  std::vector<SessionRecord> out;
  while (s.step()) out.push_back(read_session(s));
  return out;
}

std::vector<StatusEvent> Store::status_events(const std::string& session_id) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, "SELECT status, at, detail FROM status_events WHERE session_id = ? ORDER BY event_id");
  s.bind(1, session_id);
  std::vector<StatusEvent> out;
  while (s.step()) out.push_back({status_from_string(s.text(0)), parse_time(s.text(1)), s.text(2)});
  return out;
}

void Store::transition(const std::string& session_id, SessionStatus to, TimePoint at, const std::string& detail) {
  std::lock_guard lock(impl_->mu);
  Transaction tx(impl_->db);
  Stmt cur(impl_->db, "SELECT status FROM sessions WHERE session_id = ?");
  cur.bind(1, session_id);
  if (!cur.step()) throw NotFoundError("session '" + session_id + "' not found");
  const auto from = status_from_string(cur.text(0));
  if (!can_transition(from, to)) {
    throw Error(ErrorCode::conflict,
                "session '" + session_id + "' cannot move from " + to_string(from) + " to " + to_string(to));
  }
  Stmt u(impl_->db, "UPDATE sessions SET status = ?, error = CASE WHEN ? = 'failed' THEN ? ELSE error END "
                    "WHERE session_id = ?");
  u.bind(1, to_string(to)).bind(2, to_string(to)).bind(3, detail).bind(4, session_id).run();
  Stmt e(impl_->db, "INSERT INTO status_events (session_id, status, at, detail) VALUES (?, ?, ?, ?)");
  e.bind(1, session_id).bind(2, to_string(to)).bind(3, format_time(at)).bind(4, detail).run();
  tx.commit();
}

void Store::set_segments(const std::string& session_id, const std::string& segments_json) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, "UPDATE sessions SET segments_json = ? WHERE session_id = ?");
  s.bind(1, segments_json).bind(2, session_id).run();
  if (sqlite3_changes(impl_->db) == 0) throw NotFoundError("session '" + session_id + "' not found");
}

ReportRecord Store::add_report(const std::string& session_id, const std::string& body_json, TimePoint at) {
  std::lock_guard lock(impl_->mu);
  Transaction tx(impl_->db);
  Stmt v(impl_->db, "SELECT COALESCE(MAX(version), 0) FROM reports WHERE session_id = ?");
  v.bind(1, session_id);
  v.step();
  ReportRecord r;
  r.session_id = session_id;
  r.version = static_cast<int>(v.int64(0)) + 1;
  r.report_id = random_id("r_");
  r.body_json = body_json;
  r.created_at = at;
  Stmt s(impl_->db, "INSERT INTO reports (report_id, session_id, version, body_json, created_at) VALUES (?, ?, ?, ?, ?)");
  s.bind(1, r.report_id).bind(2, session_id).bind(3, r.version).bind(4, body_json).bind(5, format_time(at)).run();
  Stmt u(impl_->db, "UPDATE sessions SET report_id = ? WHERE session_id = ?");
  u.bind(1, r.report_id).bind(2, session_id).run();
  tx.commit();
  return r;
}

std::optional<ReportRecord> Store::find_report(const std::string& report_id) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, "SELECT report_id, session_id, version, body_json, created_at FROM reports WHERE report_id = ?");
  s.bind(1, report_id);
  if (!s.step()) return std::nullopt;
  return read_report(s);
}

std::vector<ReportRecord> Store::list_reports(const std::string& session_id) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, "SELECT report_id, session_id, version, body_json, created_at FROM reports WHERE session_id = ? "
                    "ORDER BY version");
  s.bind(1, session_id);
  std::vector<ReportRecord> out;
  while (s.step()) out.push_back(read_report(s));
  return out;
}

FeedbackRecord Store::add_feedback(const FeedbackRecord& f) {
  validate_feedback(f.scores);
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db,
         "INSERT INTO feedback (report_id, nurse_id, accuracy, completeness, practicability, safety, language_quality, "
         "text, created_at) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)");
  s.bind(1, f.report_id).bind(2, f.nurse_id);
  for (int i = 0; i < 5; ++i) s.bind(3 + i, f.scores.values[static_cast<std::size_t>(i)]);
  s.bind(8, f.text).bind(9, format_time(f.created_at)).run();
  FeedbackRecord out = f;
  out.feedback_id = sqlite3_last_insert_rowid(impl_->db);
  return out;
}

std::vector<FeedbackRecord> Store::list_feedback(const std::string& report_id) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db,
         "SELECT feedback_id, report_id, nurse_id, accuracy, completeness, practicability, safety, language_quality, "
         "text, created_at FROM feedback WHERE report_id = ? ORDER BY feedback_id");
  s.bind(1, report_id);
  std::vector<FeedbackRecord> out;
  while (s.step()) {
    FeedbackRecord f;
    f.feedback_id = s.int64(0);
    f.report_id = s.text(1);
    f.nurse_id = s.text(2);
    for (int i = 0; i < 5; ++i) f.scores.values[static_cast<std::size_t>(i)] = static_cast<int>(s.int64(3 + i));
    f.text = s.text(8);
    f.created_at = parse_time(s.text(9));
    out.push_back(std::move(f));
  }
  return out;
}

std::int64_t Store::enqueue(const std::string& session_id, JobKind kind, TimePoint at) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, "INSERT INTO jobs (session_id, kind, state, available_at) VALUES (?, ?, 'queued', ?)");
  s.bind(1, session_id).bind(2, to_string(kind)).bind(3, format_time(at)).run();
  return sqlite3_last_insert_rowid(impl_->db);
}

std::optional<JobRecord> Store::claim_job(TimePoint now) {
  std::lock_guard lock(impl_->mu);
  Transaction tx(impl_->db);
  Stmt s(impl_->db,
         "SELECT job_id, session_id, kind, attempts FROM jobs j WHERE state = 'queued' AND available_at <= ? "
         "AND NOT EXISTS (SELECT 1 FROM jobs r WHERE r.session_id = j.session_id AND r.state = 'running') "
         "ORDER BY job_id LIMIT 1");
  s.bind(1, format_time(now));
  if (!s.step()) return std::nullopt;
  JobRecord job{s.int64(0), s.text(1), job_kind_from(s.text(2)), static_cast<int>(s.int64(3)) + 1};
  Stmt u(impl_->db, "UPDATE jobs SET state = 'running', attempts = attempts + 1 WHERE job_id = ?");
  u.bind(1, job.job_id).run();
  tx.commit();
  return job;
}

void Store::complete_job(std::int64_t job_id) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, "UPDATE jobs SET state = 'done' WHERE job_id = ?");
  s.bind(1, job_id).run();
}

void Store::fail_job(std::int64_t job_id, const std::string& error, TimePoint retry_at, int max_attempts) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db,
         "UPDATE jobs SET state = CASE WHEN attempts >= ? THEN 'dead' ELSE 'queued' END, available_at = ?, "
         "last_error = ? WHERE job_id = ?");
  s.bind(1, max_attempts).bind(2, format_time(retry_at)).bind(3, error).bind(4, job_id).run();
}

int Store::requeue_running() {
  std::lock_guard lock(impl_->mu);
  exec(impl_->db, "UPDATE jobs SET state = 'queued' WHERE state = 'running'");
  return sqlite3_changes(impl_->db);
}

std::size_t Store::pending_jobs() {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, "SELECT COUNT(*) FROM jobs WHERE state IN ('queued', 'running')");
  s.step();
  return static_cast<std::size_t>(s.int64(0));
}

bool Store::add_reminder(const ReminderRecord& r) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, "INSERT OR IGNORE INTO reminders (patient_id, local_date, scheduled_at) VALUES (?, ?, ?)");
  s.bind(1, r.patient_id).bind(2, format_date(r.local_date)).bind(3, format_time(r.scheduled_at)).run();
  return sqlite3_changes(impl_->db) > 0;
}

std::vector<ReminderRecord> Store::due_reminders(TimePoint now) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db,
         "SELECT patient_id, local_date, scheduled_at, sent_at, attempts, last_error FROM reminders "
         "WHERE sent_at IS NULL AND scheduled_at <= ? ORDER BY scheduled_at, patient_id");
  s.bind(1, format_time(now));
  std::vector<ReminderRecord> out;
  while (s.step()) out.push_back(read_reminder(s));
  return out;
}

std::vector<ReminderRecord> Store::list_reminders(const std::string& patient_id) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db,
         "SELECT patient_id, local_date, scheduled_at, sent_at, attempts, last_error FROM reminders "
         "WHERE patient_id = ? ORDER BY local_date");
  s.bind(1, patient_id);
  std::vector<ReminderRecord> out;
  while (s.step()) out.push_back(read_reminder(s));
  return out;
}

void Store::mark_reminder_sent(const std::string& patient_id, Date local_date, TimePoint at) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, "UPDATE reminders SET sent_at = ?, attempts = attempts + 1 WHERE patient_id = ? AND local_date = ?");
  s.bind(1, format_time(at)).bind(2, patient_id).bind(3, format_date(local_date)).run();
}

void Store::mark_reminder_failed(const std::string& patient_id, Date local_date, const std::string& error) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db,
         "UPDATE reminders SET attempts = attempts + 1, last_error = ? WHERE patient_id = ? AND local_date = ?");
  s.bind(1, error).bind(2, patient_id).bind(3, format_date(local_date)).run();
}

void Store::add_token(const std::string& token, const Principal& p) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, "INSERT OR REPLACE INTO tokens (token, role, subject_id) VALUES (?, ?, ?)");
  s.bind(1, token).bind(2, to_string(p.role)).bind(3, p.subject_id).run();
}

std::optional<Principal> Store::find_token(const std::string& token) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, "SELECT role, subject_id FROM tokens WHERE token = ?");
  s.bind(1, token);
  if (!s.step()) return std::nullopt;
  return Principal{s.text(0) == "nurse" ? Role::nurse : Role::patient, s.text(1)};
}

std::optional<std::string> Store::load_knowledge_cache() {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, "SELECT body_json FROM knowledge_cache WHERE id = 1");
  if (!s.step()) return std::nullopt;
  return s.text(0);
}

void Store::save_knowledge_cache(const std::string& json) {
  std::lock_guard lock(impl_->mu);
  Stmt s(impl_->db, "INSERT OR REPLACE INTO knowledge_cache (id, body_json) VALUES (1, ?)");
  s.bind(1, json).run();
}

std::optional<knowledge::KnowledgeCache> SqliteCacheStore::load() {
  auto body = store_.load_knowledge_cache();
  if (!body) return std::nullopt;
  return knowledge::cache_from_json(*body);
}

void SqliteCacheStore::save(const knowledge::KnowledgeCache& cache) {
  store_.save_knowledge_cache(knowledge::cache_to_json(cache));
}

}  // namespace rehab::service
