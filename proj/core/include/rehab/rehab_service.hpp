#pragma once

#include "rehab/blob_store.hpp"
#include "rehab/catalog.hpp"
#include "rehab/knowledge_retrieval.hpp"
#include "rehab/llm_client.hpp"
#include "rehab/pose_features.hpp"
#include "rehab/segmenter.hpp"
#include "rehab/service_logic.hpp"
#include "rehab/store.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace rehab::service {

struct ServiceConfig {
  std::filesystem::path data_dir = "rehab-data";  // rehab.db, blobs/, clips/
  std::size_t max_upload_bytes = std::size_t{512} << 20;
  std::size_t worker_threads = 1;
  int max_job_attempts = 3;
  std::chrono::seconds job_retry_delay{30};
  /// Period of the reminder scheduling/dispatch loop; zero disables it.
  std::chrono::seconds reminder_interval{60};
  std::chrono::milliseconds worker_poll{200};
  segment::SegmentOptions segment_options;
  segment::PredictOptions predict_options;
  /// Optional bootstrap token granting the nurse role.
  std::string nurse_token;
  std::size_t report_parallel_actions = 1;

  /// Reads REHAB_DATA_DIR, REHAB_MAX_UPLOAD_MB, REHAB_WORKERS and
  /// REHAB_NURSE_TOKEN over the defaults.
  static ServiceConfig from_env();
};

/// Models and providers the processing jobs run with.
struct Pipeline {
  segment::WindowClassifier* classifier = nullptr;
  pose::KeypointLayout layout = pose::KeypointLayout::openpose_body25();
  const ClassCatalog* catalog = nullptr;
  const knowledge::KnowledgeBase* knowledge = nullptr;  // optional
  llm::LlmClient* llm = nullptr;
  llm::RetryPolicy retry;
  llm::Transcript* transcript = nullptr;  // optional
};

class ReminderSender {
 public:
  virtual ~ReminderSender() = default;
  /// Throws on delivery failure; the reminder is retried next cycle.
  virtual void send(const PatientRecord& patient, const ReminderRecord& reminder) = 0;
};

/// Default delivery: one log line per reminder.
class LoggingReminderSender final : public ReminderSender {
 public:
  void send(const PatientRecord& patient, const ReminderRecord& reminder) override;
};

using Clock = std::function<TimePoint()>;
TimePoint system_now();

struct RegisteredPatient {
  PatientRecord patient;
  std::string token;
};

struct NewPatient {
  std::optional<std::string> patient_id;
  std::optional<Date> enrollment_date;  // defaults to today (UTC)
  std::string exercise_plan_id = "upper-limb-15";
  bool reminder_opt_in = false;
  int utc_offset_minutes = 0;
};

/// Registration, uploads, the processing queue, reminders, feedback and
/// analytics, plus the HTTP front end over them.
class RehabService {
 public:
  RehabService(ServiceConfig config, Pipeline pipeline, Clock clock = system_now,
               std::shared_ptr<ReminderSender> reminders = std::make_shared<LoggingReminderSender>());
  ~RehabService();
  RehabService(const RehabService&) = delete;
  RehabService& operator=(const RehabService&) = delete;

  Store& store() noexcept { return *store_; }
  BlobStore& blobs() noexcept { return *blobs_; }
  const ServiceConfig& config() const noexcept { return config_; }

  RegisteredPatient register_patient(const NewPatient& patient);
  /// Issues an extra bearer token for a principal.
  std::string issue_token(const Principal& principal);
  std::optional<Principal> authenticate(std::string_view bearer_token);

  /// Stores the video and pose stream, records the session and queues its
  /// processing. NotFoundError for an unknown patient (nothing stored).
  UploadOutcome upload_session(const std::string& patient_id, std::string_view video_bytes,
                               std::string_view keypoints_bytes, std::optional<std::string> idempotency_key = {});

  /// Queues a new report version for a segmented or reported session.
  std::int64_t enqueue_reprocess(const std::string& session_id);

  /// Claims and runs one job; false when the queue has nothing runnable.
  bool run_one_job();
  /// Runs jobs on this thread until none is runnable.
  std::size_t drain();

  /// Adds the next-08:00 reminder for every opted-in patient. Returns how
  /// many new reminders were created.
  std::size_t schedule_reminders(TimePoint now);
  /// Delivers reminders that are due. Returns how many were delivered.
  std::size_t dispatch_due(TimePoint now);

  FeedbackRecord submit_feedback(const std::string& report_id, const std::string& nurse_id, const FeedbackScores& scores,
                                 const std::string& text);
  AdherenceStats adherence(Date start, Date end);

  /// Background workers and the reminder loop.
  void start_workers();
  /// Binds the HTTP server; port 0 picks a free port. Returns the port.
  int bind(const std::string& host, int port);
  /// Serves on the bound socket until stop(). Blocks.
  void serve();
  /// Serves on a background thread.
  void serve_in_background();
  void stop();

 private:
  void process(const JobRecord& job);
  void segment_session(const SessionRecord& session);
  void report_session(const SessionRecord& session);
  void worker_loop();
  void reminder_loop();
  void install_routes();

  ServiceConfig config_;
  Pipeline pipeline_;
  Clock clock_;
  std::shared_ptr<ReminderSender> reminders_;
  std::unique_ptr<Store> store_;
  std::unique_ptr<BlobStore> blobs_;
  struct Http;
  std::unique_ptr<Http> http_;
  std::atomic<bool> stopping_{false};
  std::vector<std::thread> threads_;
};

}  // namespace rehab::service
