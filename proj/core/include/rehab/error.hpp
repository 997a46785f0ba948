#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rehab {

/// Machine-readable error category. The service maps these onto HTTP status
/// codes and the `code` field of error bodies.
enum class ErrorCode {
  validation,
  structural,
  configuration,
  media,
  dependency,
  not_found,
  conflict,
  unauthorized,
  forbidden,
  payload_too_large,
  provider,
  internal,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message)
      : Error(ErrorCode::validation, message) {}
  ValidationError(const std::string& field, const std::string& message)
      : Error(ErrorCode::validation, field + ": " + message), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& message)
      : Error(ErrorCode::structural, message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(ErrorCode::configuration, message) {}
};

class MediaError : public Error {
 public:
  explicit MediaError(const std::string& message)
      : Error(ErrorCode::media, message) {}
};

class DependencyError : public Error {
 public:
  explicit DependencyError(const std::string& message)
      : Error(ErrorCode::dependency, message) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& message)
      : Error(ErrorCode::not_found, message) {}
};

}  // namespace rehab
