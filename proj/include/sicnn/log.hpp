#pragma once

#include <string>

namespace sicnn {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

/// Current threshold; initialised from SICNN_LOG={error,info,debug}.
LogLevel log_level();
void set_log_level(LogLevel level);
LogLevel parse_log_level(const std::string& text);

void log_error(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace sicnn
