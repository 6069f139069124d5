#pragma once

#include <iostream>
#include <sstream>

namespace lantern {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Verbosity comes from LANTERN_LOG (error|warn|info|debug); default warn.
LogLevel log_level();
void set_log_level(LogLevel level);

template <typename... Args>
void log_at(LogLevel level, const char* tag, const Args&... args) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::ostringstream os;
  os << "[" << tag << "] ";
  (os << ... << args);
  os << "\n";
  std::clog << os.str();
}

template <typename... Args>
void log_warn(const Args&... args) { log_at(LogLevel::Warn, "warn", args...); }
template <typename... Args>
void log_info(const Args&... args) { log_at(LogLevel::Info, "info", args...); }
template <typename... Args>
void log_debug(const Args&... args) { log_at(LogLevel::Debug, "debug", args...); }

}  // namespace lantern
