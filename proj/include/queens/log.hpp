#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <string_view>

namespace queens {

enum class LogLevel { debug = 0, info = 1, warning = 2, error = 3 };

inline LogLevel log_level_from_string(std::string_view s) {
    if (s == "debug") return LogLevel::debug;
    if (s == "info") return LogLevel::info;
    if (s == "warning" || s == "warn") return LogLevel::warning;
    if (s == "error") return LogLevel::error;
    return LogLevel::info;
}

/// Thread-safe line-oriented run logger. Writes timestamped lines to a
/// log file and optionally echoes them to stderr.
class RunLogger {
public:
    RunLogger() = default;

    RunLogger(const std::filesystem::path& file, LogLevel level = LogLevel::info,
              bool echo_stderr = false)
        : level_(level), echo_(echo_stderr) {
        file_.open(file, std::ios::out | std::ios::app);
    }

    void set_level(LogLevel level) { level_ = level; }
    void set_echo(bool echo) { echo_ = echo; }

    void debug(std::string_view msg) { write(LogLevel::debug, msg); }
    void info(std::string_view msg) { write(LogLevel::info, msg); }
    void warning(std::string_view msg) { write(LogLevel::warning, msg); }
    void error(std::string_view msg) { write(LogLevel::error, msg); }

    void write(LogLevel level, std::string_view msg) {
        if (level < level_) return;
        const std::string line = timestamp_utc() + " " + level_name(level) + " " +
                                 std::string(msg) + "\n";
        std::lock_guard<std::mutex> lock(mutex_);
        if (file_.is_open()) {
            file_ << line;
            file_.flush();
        }
        if (echo_) std::fputs(line.c_str(), stderr);
    }

    static std::string timestamp_utc() {
        using namespace std::chrono;
        const auto now = system_clock::now();
        const auto ms = duration_cast<milliseconds>(now.time_since_epoch()) % 1000;
        const std::time_t t = system_clock::to_time_t(now);
        std::tm tm{};
        gmtime_r(&t, &tm);
        char buf[80];
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                      tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                      tm.tm_min, tm.tm_sec, static_cast<int>(ms.count()));
        return buf;
    }

private:
    static const char* level_name(LogLevel level) {
        switch (level) {
            case LogLevel::debug: return "DEBUG";
            case LogLevel::info: return "INFO";
            case LogLevel::warning: return "WARN";
            case LogLevel::error: return "ERROR";
        }
        return "INFO";
    }

    std::ofstream file_;
    LogLevel level_ = LogLevel::info;
    bool echo_ = false;
    std::mutex mutex_;
};

}  // namespace queens
