#pragma once

#include <string>
#include <string_view>

namespace rehab::log {

/// trace, debug, info, warn, error or off; anything else is a ConfigError.
void set_level(std::string_view level);
void debug(const std::string& message);
void info(const std::string& message);
void warn(const std::string& message);
void error(const std::string& message);

}  // namespace rehab::log
