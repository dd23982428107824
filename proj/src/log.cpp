#include "sift/log.hpp"

#include <iostream>
#include <mutex>

namespace sift::log {
namespace {
std::mutex g_mutex;
std::function<void(Level, std::string_view)> g_sink;
Level g_min = Level::info;

const char* tag(Level l) {
    switch (l) {
        case Level::debug: return "debug";
        case Level::info: return "info";
        case Level::warn: return "warn";
        default: return "error";
    }
}
}  // namespace

void set_sink(std::function<void(Level, std::string_view)> sink) {
    std::lock_guard lock(g_mutex);
    g_sink = std::move(sink);
}

void set_min_level(Level level) {
    std::lock_guard lock(g_mutex);
    g_min = level;
}

void write(Level level, std::string_view message) {
    std::lock_guard lock(g_mutex);
    if (level < g_min) return;
    if (g_sink) {
        g_sink(level, message);
        return;
    }
    std::clog << "[sift " << tag(level) << "] " << message << '\n';
}

}  // namespace sift::log
