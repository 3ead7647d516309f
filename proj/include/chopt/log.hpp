#pragma once

#include <iostream>
#include <string_view>

namespace chopt {

enum class LogLevel { quiet = 0, warn = 1, info = 2 };

inline LogLevel& log_level() {
  static LogLevel level = LogLevel::warn;
  return level;
}

inline void log_warn(std::string_view msg) {
  if (log_level() >= LogLevel::warn) std::clog << "[chopt] warning: " << msg << '\n';
}

inline void log_info(std::string_view msg) {
  if (log_level() >= LogLevel::info) std::clog << "[chopt] " << msg << '\n';
}

}  // namespace chopt
