#pragma once

#include "rehab/knowledge_retrieval.hpp"
#include "rehab/service_logic.hpp"

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

struct sqlite3;

namespace rehab::service {

struct PatientRecord {
  std::string patient_id;
  Date enrollment_date{};
  std::string exercise_plan_id;
  bool reminder_opt_in = false;
  int utc_offset_minutes = 0;
};

struct StatusEvent {
  SessionStatus status = SessionStatus::uploaded;
  TimePoint at{};
  std::string detail;
};

struct SessionRecord {
  std::string session_id;
  std::string patient_id;
  TimePoint upload_time{};
  std::string video_uri;
  std::string keypoints_uri;
  SessionStatus status = SessionStatus::uploaded;
  std::string error;
  std::string segments_json;  // empty until segmented
  std::string report_id;      // latest report, empty until reported
};

struct ReportRecord {
  std::string report_id;
  std::string session_id;
  int version = 1;
  std::string body_json;
  TimePoint created_at{};
};

struct FeedbackRecord {
  std::int64_t feedback_id = 0;
  std::string report_id;
  std::string nurse_id;
  FeedbackScores scores;
  std::string text;
  TimePoint created_at{};
};

enum class JobKind { process, report };
std::string to_string(JobKind kind);

struct JobRecord {
  std::int64_t job_id = 0;
  std::string session_id;
  JobKind kind = JobKind::process;
  int attempts = 0;
};

struct ReminderRecord {
  std::string patient_id;
  Date local_date{};
  TimePoint scheduled_at{};
  std::optional<TimePoint> sent_at;
  int attempts = 0;
  std::string last_error;
};

enum class Role { patient, nurse };
std::string to_string(Role role);

struct Principal {
  Role role = Role::patient;
  std::string subject_id;  // patient id or nurse id
};

struct NewSession {
  std::string patient_id;
  std::string video_uri;
  std::string keypoints_uri;
  TimePoint upload_time{};
  std::optional<std::string> idempotency_key;
};

struct UploadOutcome {
  std::string session_id;
  bool replayed = false;  // idempotency key seen before
};

/// Transactional store over one SQLite database. All methods are safe to
/// call from several threads.
class Store {
 public:
  explicit Store(const std::filesystem::path& path);  // ":memory:" allowed
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  /// Creates or upgrades the schema. Returns the schema version.
  int migrate();

  void insert_patient(const PatientRecord& patient);
  std::optional<PatientRecord> find_patient(const std::string& patient_id);
  std::vector<PatientRecord> list_patients();
  void set_reminder_opt_in(const std::string& patient_id, bool opt_in, std::optional<int> utc_offset_minutes);

  /// Persists the session as uploaded and queues its processing job in one
  /// transaction. A repeated idempotency key for the same patient returns
  /// the original session.
  UploadOutcome create_session(const NewSession& session);
  std::optional<SessionRecord> find_session(const std::string& session_id);
  std::vector<SessionRecord> list_sessions(const std::string& patient_id);
  std::vector<SessionRecord> list_all_sessions();
  std::vector<StatusEvent> status_events(const std::string& session_id);

  /// Moves the session along the status machine and logs the event.
  /// Error(conflict) for a disallowed move.
  void transition(const std::string& session_id, SessionStatus to, TimePoint at, const std::string& detail = {});
  void set_segments(const std::string& session_id, const std::string& segments_json);

  /// Stores a new immutable report version and points the session at it.
  ReportRecord add_report(const std::string& session_id, const std::string& body_json, TimePoint at);
  std::optional<ReportRecord> find_report(const std::string& report_id);
  std::vector<ReportRecord> list_reports(const std::string& session_id);

  FeedbackRecord add_feedback(const FeedbackRecord& feedback);
  std::vector<FeedbackRecord> list_feedback(const std::string& report_id);

  std::int64_t enqueue(const std::string& session_id, JobKind kind, TimePoint at);
  /// Atomically claims the oldest runnable job whose session has no other
  /// running job.
  std::optional<JobRecord> claim_job(TimePoint now);
  void complete_job(std::int64_t job_id);
  /// Requeues with a delay until `max_attempts`, then marks the job dead.
  void fail_job(std::int64_t job_id, const std::string& error, TimePoint retry_at, int max_attempts);
  /// Jobs left running by a crashed process go back to the queue.
  int requeue_running();
  std::size_t pending_jobs();

  /// Inserts the reminder unless one exists for (patient, local date).
  bool add_reminder(const ReminderRecord& reminder);
  std::vector<ReminderRecord> due_reminders(TimePoint now);
  std::vector<ReminderRecord> list_reminders(const std::string& patient_id);
  void mark_reminder_sent(const std::string& patient_id, Date local_date, TimePoint at);
  void mark_reminder_failed(const std::string& patient_id, Date local_date, const std::string& error);

  void add_token(const std::string& token, const Principal& principal);
  std::optional<Principal> find_token(const std::string& token);

  std::optional<std::string> load_knowledge_cache();
  void save_knowledge_cache(const std::string& json);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Knowledge cache kept in the service database.
class SqliteCacheStore final : public knowledge::KnowledgeCacheStore {
 public:
  explicit SqliteCacheStore(Store& store) : store_(store) {}
  std::optional<knowledge::KnowledgeCache> load() override;
  void save(const knowledge::KnowledgeCache& cache) override;

 private:
  Store& store_;
};

/// 128-bit random identifier in hex with a prefix ("s_4f0c...").
std::string random_id(std::string_view prefix);

}  // namespace rehab::service
