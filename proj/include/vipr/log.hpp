#pragma once

#include <filesystem>
#include <sstream>
#include <string>

namespace vipr::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

void set_level(Level level);
Level level();
void write(Level level, const std::string& message);
// Also appends every message to `path` until close_file().
void open_file(const std::filesystem::path& path);
void close_file();

template <typename... Args>
void info(const Args&... args) {
    if (level() > Level::info) return;
    std::ostringstream os;
    (os << ... << args);
    write(Level::info, os.str());
}

template <typename... Args>
void warn(const Args&... args) {
    if (level() > Level::warn) return;
    std::ostringstream os;
    (os << ... << args);
    write(Level::warn, os.str());
}

template <typename... Args>
void debug(const Args&... args) {
    if (level() > Level::debug) return;
    std::ostringstream os;
    (os << ... << args);
    write(Level::debug, os.str());
}

}  // namespace vipr::log
