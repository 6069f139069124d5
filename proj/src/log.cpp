#include "lantern/log.hpp"

#include <atomic>
#include <cstdlib>
#include <string_view>

namespace lantern {

namespace {

LogLevel from_env() {
  const char* env = std::getenv("LANTERN_LOG");
  if (env == nullptr) return LogLevel::Warn;
  const std::string_view v(env);
  if (v == "error") return LogLevel::Error;
  if (v == "info") return LogLevel::Info;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Warn;
}

std::atomic<int>& level_slot() {
  static std::atomic<int> level{static_cast<int>(from_env())};
  return level;
}

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_slot().load()); }
void set_log_level(LogLevel level) { level_slot().store(static_cast<int>(level)); }

}  // namespace lantern
