#include "vipr/log.hpp"

#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>

namespace vipr::log {

namespace {
std::atomic<Level> g_level{Level::info};
std::mutex g_mutex;
std::ofstream g_file;
constexpr const char* kNames[] = {"debug", "info", "warn", "error"};
}  // namespace

void set_level(Level l) { g_level = l; }
Level level() { return g_level; }

void write(Level l, const std::string& message) {
    if (l < g_level || l == Level::off) return;
    std::lock_guard lock(g_mutex);
    std::clog << '[' << kNames[static_cast<int>(l)] << "] " << message << '\n';
    if (g_file.is_open()) g_file << '[' << kNames[static_cast<int>(l)] << "] " << message << std::endl;
}

void open_file(const std::filesystem::path& path) {
    std::lock_guard lock(g_mutex);
    if (g_file.is_open()) g_file.close();
    g_file.open(path, std::ios::app);
}

void close_file() {
    std::lock_guard lock(g_mutex);
    if (g_file.is_open()) g_file.close();
}

}  // namespace vipr::log
