#pragma once

#include <cstdio>
#include <ctime>
#include <string>

namespace implan {

/// Line-oriented stderr logging with ISO-8601 UTC timestamps.
inline void log_line(const char* level, const std::string& msg) {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm);
  std::fprintf(stderr, "%s %s %s\n", stamp, level, msg.c_str());
}

inline void log_info(const std::string& msg) { log_line("INFO", msg); }
inline void log_warn(const std::string& msg) { log_line("WARN", msg); }
inline void log_error(const std::string& msg) { log_line("ERROR", msg); }

}  // namespace implan
