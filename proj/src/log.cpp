#include "sicnn/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <optional>
#include <stdexcept>

namespace sicnn {

namespace {

std::mutex g_mutex;
std::optional<LogLevel> g_level;

void emit(LogLevel level, const char* tag, const std::string& msg) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) {
        return;
    }
    std::lock_guard lock(g_mutex);
    std::cerr << "[" << tag << "] " << msg << '\n';
}

}  // namespace

LogLevel parse_log_level(const std::string& text) {
    if (text == "error") {
        return LogLevel::Error;
    }
    if (text == "info") {
        return LogLevel::Info;
    }
    if (text == "debug") {
        return LogLevel::Debug;
    }
    throw std::invalid_argument("unknown log level '" + text + "' (expected error, info or debug)");
}

LogLevel log_level() {
    if (!g_level) {
        const char* env = std::getenv("SICNN_LOG");
        try {
            g_level = env ? parse_log_level(env) : LogLevel::Info;
        } catch (const std::invalid_argument&) {
            g_level = LogLevel::Info;
        }
    }
    return *g_level;
}

void set_log_level(LogLevel level) { g_level = level; }

void log_error(const std::string& msg) { emit(LogLevel::Error, "error", msg); }
void log_info(const std::string& msg) { emit(LogLevel::Info, "info", msg); }
void log_debug(const std::string& msg) { emit(LogLevel::Debug, "debug", msg); }

}  // namespace sicnn
