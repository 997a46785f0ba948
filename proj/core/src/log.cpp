#include "rehab/log.hpp"

#include "rehab/error.hpp"

#include <spdlog/spdlog.h>

namespace rehab::log {

void set_level(std::string_view level) {
  const auto parsed = spdlog::level::from_str(std::string(level));
  if (parsed == spdlog::level::off && level != "off") {
    throw ConfigError("unknown log level '" + std::string(level) + "'");
  }
  spdlog::set_level(parsed);
}

void debug(const std::string& message) { spdlog::debug(message); }
void info(const std::string& message) { spdlog::info(message); }
void warn(const std::string& message) { spdlog::warn(message); }
void error(const std::string& message) { spdlog::error(message); }

}  // namespace rehab::log
