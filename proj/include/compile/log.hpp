#pragma once

#include <string>

namespace compile {

// Verbosity from COMPILE_LOG (info|debug); messages go to stderr.
enum class LogLevel { Quiet, Info, Debug };
LogLevel log_level();
void log_info(const std::string& message);
void log_debug(const std::string& message);

}  // namespace compile
