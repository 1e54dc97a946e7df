#include "compile/log.hpp"

#include <cstdlib>
#include <iostream>
#include <string_view>

namespace compile {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* v = std::getenv("COMPILE_LOG");
    if (!v) return LogLevel::Quiet;
    const std::string_view s(v);
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    return LogLevel::Quiet;
  }();
  return level;
}

void log_info(const std::string& message) {
  if (log_level() >= LogLevel::Info) std::cerr << "[info] " << message << '\n';
}

void log_debug(const std::string& message) {
  if (log_level() >= LogLevel::Debug) std::cerr << "[debug] " << message << '\n';
}

}  // namespace compile
