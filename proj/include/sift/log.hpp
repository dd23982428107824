#pragma once

#include <functional>
#include <string_view>

namespace sift::log {

enum class Level { debug, info, warn, error };

/// Replaces the sink (default: stderr). Passing an empty function restores the default.
void set_sink(std::function<void(Level, std::string_view)> sink);
void set_min_level(Level level);

void write(Level level, std::string_view message);
inline void debug(std::string_view m) { write(Level::debug, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void warn(std::string_view m) { write(Level::warn, m); }
inline void error(std::string_view m) { write(Level::error, m); }

}  // namespace sift::log
