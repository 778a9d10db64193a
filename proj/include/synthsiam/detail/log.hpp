#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace synthsiam {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

namespace detail {

inline LogLevel parse_log_level(const char* s) {
    if (s == nullptr) return LogLevel::Info;
    const std::string_view v(s);
    if (v == "debug") return LogLevel::Debug;
    if (v == "info") return LogLevel::Info;
    if (v == "warn") return LogLevel::Warn;
    if (v == "error") return LogLevel::Error;
    if (v == "off") return LogLevel::Off;
    return LogLevel::Info;
}

inline LogLevel& log_level_ref() {
    static LogLevel level = parse_log_level(std::getenv("SYNTHSIAM_LOG"));
    return level;
}

inline std::mutex& log_mutex() {
    static std::mutex mu;
    return mu;
}

inline void emit(LogLevel level, const char* tag, std::string_view msg) {
    if (level < log_level_ref()) return;
    std::lock_guard<std::mutex> lock(log_mutex());
    std::cerr << "[synthsiam " << tag << "] " << msg << '\n';
}

} // namespace detail

inline void set_log_level(LogLevel level) { detail::log_level_ref() = level; }

inline void log_debug(std::string_view msg) { detail::emit(LogLevel::Debug, "debug", msg); }
inline void log_info(std::string_view msg) { detail::emit(LogLevel::Info, "info", msg); }
inline void log_warn(std::string_view msg) { detail::emit(LogLevel::Warn, "warn", msg); }
inline void log_error(std::string_view msg) { detail::emit(LogLevel::Error, "error", msg); }

} // namespace synthsiam
