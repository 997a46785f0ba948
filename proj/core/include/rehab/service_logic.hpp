#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rehab::service {

using TimePoint = std::chrono::sys_seconds;
using Date = std::chrono::year_month_day;

std::string format_date(Date d);
/// Parses YYYY-MM-DD; ValidationError naming `field` otherwise.
Date parse_date(std::string_view text, std::string_view field = "date");
/// ISO-8601 UTC, second resolution ("2025-08-23T08:00:00Z").
std::string format_time(TimePoint t);
TimePoint parse_time(std::string_view text, std::string_view field = "time");

// ---- session status -------------------------------------------------------

enum class SessionStatus { uploaded, segmented, reported, failed };
std::string to_string(SessionStatus s);
SessionStatus status_from_string(std::string_view s);
/// Forward moves along uploaded -> segmented -> reported, or to failed from
/// any non-failed state.
bool can_transition(SessionStatus from, SessionStatus to) noexcept;

// ---- framing --------------------------------------------------------------

inline constexpr double kFramingConfidenceFloor = 0.3;

struct ShoulderPoint {
  double x = 0.0;
  double y = 0.0;
  double confidence = 0.0;
};

enum class FramingStatus { in_frame, out_of_frame };
std::string to_string(FramingStatus s);

struct FramingResult {
  FramingStatus status = FramingStatus::out_of_frame;
  std::string reason;  // empty when in frame
};

/// In frame iff both shoulders are confident and lie inside the image.
/// Clients sample this once per second and pause recording while out of frame.
FramingResult framing_check(const ShoulderPoint& left, const ShoulderPoint& right, int image_width, int image_height,
                            double confidence_floor = kFramingConfidenceFloor);

// ---- feedback -------------------------------------------------------------

inline constexpr std::array<std::string_view, 5> kFeedbackDimensions = {
    "accuracy", "completeness", "practicability", "safety", "language_quality"};

struct FeedbackScores {
  std::array<int, 5> values{};  // kFeedbackDimensions order
  int& operator[](std::string_view dimension);
  int operator[](std::string_view dimension) const;
};

/// ValidationError naming the first dimension outside 1..10.
void validate_feedback(const FeedbackScores& scores);

// ---- reminders ------------------------------------------------------------

inline constexpr int kReminderHour = 8;

struct ReminderSlot {
  TimePoint at;     // UTC instant of the local 08:00
  Date local_date;  // patient-local calendar date of that 08:00
};

/// The first patient-local 08:00 strictly after `now`.
ReminderSlot next_reminder(TimePoint now, int utc_offset_minutes);

// ---- adherence ------------------------------------------------------------

struct PatientAdherenceInput {
  std::string patient_id;
  Date enrollment_date;
  std::vector<TimePoint> session_times;
  int utc_offset_minutes = 0;
};

struct PatientAdherence {
  std::string patient_id;
  std::int64_t sessions = 0;
  std::int64_t enrolled_days = 0;
  double frequency = 0.0;
};

struct AdherenceStats {
  std::size_t patients = 0;
  std::int64_t total_sessions = 0;
  double avg_sessions = 0.0;   // total sessions / patients
  double avg_frequency = 0.0;  // mean of per-patient sessions / enrolled days
  std::vector<PatientAdherence> per_patient;
};

/// From precomputed (sessions, enrolled days) pairs. ValidationError for an
/// empty list or a non-positive day count.
AdherenceStats adherence_from_counts(std::span<const PatientAdherence> patients);

/// Enrolled days run from max(enrollment, start) to `end`, both inclusive,
/// in patient-local dates; sessions count when their local date falls in
/// that range. Patients enrolled after `end` are excluded.
AdherenceStats adherence_stats(std::span<const PatientAdherenceInput> patients, Date period_start, Date period_end);

}  // namespace rehab::service
