#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace pansharp {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

// Verbosity comes from the PANSHARP_LOG environment variable
// (error|warn|info|debug). Default: warn.
inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("PANSHARP_LOG");
        if (!env) return LogLevel::warn;
        if (!std::strcmp(env, "error")) return LogLevel::error;
        if (!std::strcmp(env, "info")) return LogLevel::info;
        if (!std::strcmp(env, "debug")) return LogLevel::debug;
        return LogLevel::warn;
    }();
    return level;
}

inline void log_msg(LogLevel level, const std::string& msg) {
    if (level > log_level()) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

inline void log_error(const std::string& msg) { log_msg(LogLevel::error, msg); }
inline void log_warn(const std::string& msg) { log_msg(LogLevel::warn, msg); }
inline void log_info(const std::string& msg) { log_msg(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log_msg(LogLevel::debug, msg); }

}  // namespace pansharp
