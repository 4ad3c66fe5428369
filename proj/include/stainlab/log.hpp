#pragma once

#include <string>

// Thin logging facade. Translation units that also include libtorch headers cannot include spdlog
// directly because libtorch ships its own fmt headers.
namespace stainlab::log {

enum class Level { trace, debug, info, warn, error, off };

void set_level_from_string(const std::string& name);
bool enabled(Level level);
void write(Level level, const std::string& message);

inline void debug(const std::string& m) { write(Level::debug, m); }
inline void info(const std::string& m) { write(Level::info, m); }
inline void warn(const std::string& m) { write(Level::warn, m); }
inline void error(const std::string& m) { write(Level::error, m); }

std::string fixed(double value, int precision = 4);

}  // namespace stainlab::log
