#include "rehab/service_logic.hpp"

#include "rehab/error.hpp"

#include <cmath>
#include <cstdio>

namespace rehab::service {

using namespace std::chrono;

std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                static_cast<unsigned>(d.day()));
  return buf;
}

Date parse_date(std::string_view text, std::string_view field) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  char tail = 0;
  const std::string s(text);
  if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    throw ValidationError(std::string(field), "expected YYYY-MM-DD, got '" + s + "'");
  }
  const Date date{year{y}, month{m}, day{d}};
  if (!date.ok()) throw ValidationError(std::string(field), "'" + s + "' is not a calendar date");
  return date;
}

std::string format_time(TimePoint t) {
  const auto dp = floor<days>(t);
  const Date d{dp};
  const hh_mm_ss hms{t - dp};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", format_date(d).c_str(), static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()));
  return buf;
}

TimePoint parse_time(std::string_view text, std::string_view field) {
  const std::string s(text);
  int hh = 0;
  int mm = 0;
  int ss = 0;
  if (s.size() != 20 || s[10] != 'T' || s[19] != 'Z' ||
      std::sscanf(s.c_str() + 11, "%2d:%2d:%2d", &hh, &mm, &ss) != 3 || hh > 23 || mm > 59 || ss > 60) {
    throw ValidationError(std::string(field), "expected YYYY-MM-DDTHH:MM:SSZ, got '" + s + "'");
  }
  return sys_days{parse_date(s.substr(0, 10), field)} + hours{hh} + minutes{mm} + seconds{ss};
}

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::uploaded: return "uploaded";
    case SessionStatus::segmented: return "segmented";
    case SessionStatus::reported: return "reported";
    case SessionStatus::failed: return "failed";
  }
  return "failed";
}

SessionStatus status_from_string(std::string_view s) {
  if (s == "uploaded") return SessionStatus::uploaded;
  if (s == "segmented") return SessionStatus::segmented;
  if (s == "reported") return SessionStatus::reported;
  if (s == "failed") return SessionStatus::failed;
  throw ValidationError("status", "unknown session status '" + std::string(s) + "'");
}

bool can_transition(SessionStatus from, SessionStatus to) noexcept {
  if (from == SessionStatus::failed) return false;
  if (to == SessionStatus::failed) return true;
  return static_cast<int>(to) == static_cast<int>(from) + 1;
}

std::string to_string(FramingStatus s) { return s == FramingStatus::in_frame ? "in_frame" : "out_of_frame"; }

FramingResult framing_check(const ShoulderPoint& left, const ShoulderPoint& right, int image_width, int image_height,
                            double confidence_floor) {
  auto check = [&](const ShoulderPoint& p, const char* name) -> std::string {
    if (!(p.confidence >= confidence_floor)) return std::string(name) + " shoulder confidence below floor";
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0.0 || p.y < 0.0 ||
        p.x >= static_cast<double>(image_width) || p.y >= static_cast<double>(image_height)) {
      return std::string(name) + " shoulder outside the image";
    }
    return {};
  };
  if (auto r = check(left, "left"); !r.empty()) return {FramingStatus::out_of_frame, r};
  if (auto r = check(right, "right"); !r.empty()) return {FramingStatus::out_of_frame, r};
  return {FramingStatus::in_frame, {}};
}

int& FeedbackScores::operator[](std::string_view dimension) {
  for (std::size_t i = 0; i < kFeedbackDimensions.size(); ++i) {
    if (kFeedbackDimensions[i] == dimension) return values[i];
  }
  throw ValidationError(std::string(dimension), "unknown feedback dimension");
}

int FeedbackScores::operator[](std::string_view dimension) const {
  return const_cast<FeedbackScores&>(*this)[dimension];
}

void validate_feedback(const FeedbackScores& scores) {
  for (std::size_t i = 0; i < kFeedbackDimensions.size(); ++i) {
    const int v = scores.values[i];
    if (v < 1 || v > 10) {
      throw ValidationError(std::string(kFeedbackDimensions[i]), "score " + std::to_string(v) + " outside 1..10");
    }
  }
}

ReminderSlot next_reminder(TimePoint now, int utc_offset_minutes) {
  const auto offset = minutes{utc_offset_minutes};
  const auto local = now + offset;
  auto local_day = floor<days>(local);
  auto candidate = local_day + hours{kReminderHour};
  if (candidate <= local) {
    local_day += days{1};
    candidate = local_day + hours{kReminderHour};
  }
  return {time_point_cast<seconds>(candidate - offset), Date{local_day}};
}

AdherenceStats adherence_from_counts(std::span<const PatientAdherence> patients) {
  if (patients.empty()) throw ValidationError("patients", "adherence needs at least one enrolled patient");
  AdherenceStats s;
  s.patients = patients.size();
  double freq_sum = 0.0;
  for (const auto& p : patients) {
    if (p.enrolled_days <= 0) throw ValidationError(p.patient_id, "enrolled days must be positive");
    PatientAdherence out = p;
    out.frequency = static_cast<double>(p.sessions) / static_cast<double>(p.enrolled_days);
    s.total_sessions += p.sessions;
    freq_sum += out.frequency;
    s.per_patient.push_back(std::move(out));
  }
  s.avg_sessions = static_cast<double>(s.total_sessions) / static_cast<double>(s.patients);
  s.avg_frequency = freq_sum / static_cast<double>(s.patients);
  return s;
}

AdherenceStats adherence_stats(std::span<const PatientAdherenceInput> patients, Date period_start, Date period_end) {
  const sys_days start{period_start};
  const sys_days end{period_end};
  if (end < start) throw ValidationError("period", "end precedes start");
  std::vector<PatientAdherence> counts;
  for (const auto& p : patients) {
    const sys_days first = std::max(start, sys_days{p.enrollment_date});
    if (first > end) continue;
    PatientAdherence a;
    a.patient_id = p.patient_id;
    a.enrolled_days = (end - first).count() + 1;
    for (const auto& t : p.session_times) {
      const auto local_day = floor<days>(t + minutes{p.utc_offset_minutes});
      if (local_day >= first && local_day <= end) ++a.sessions;
    }
    counts.push_back(std::move(a));
  }
  return adherence_from_counts(counts);
}

}  // namespace rehab::service
