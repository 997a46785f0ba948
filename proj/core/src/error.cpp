#include "rehab/error.hpp"

namespace rehab {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::validation: return "validation_error";
    case ErrorCode::structural: return "structural_error";
    case ErrorCode::configuration: return "configuration_error";
    case ErrorCode::media: return "media_error";
    case ErrorCode::dependency: return "dependency_error";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::unauthorized: return "unauthorized";
    case ErrorCode::forbidden: return "forbidden";
    case ErrorCode::payload_too_large: return "payload_too_large";
    case ErrorCode::provider: return "provider_error";
    case ErrorCode::internal: return "internal_error";
  }
  return "internal_error";
}

}  // namespace rehab
