#include "stainlab/log.hpp"

#include <spdlog/spdlog.h>

#include <cstdio>

namespace stainlab::log {

namespace {

spdlog::level::level_enum to_spd(Level level) {
    switch (level) {
        case Level::trace: return spdlog::level::trace;
        case Level::debug: return spdlog::level::debug;
        case Level::info: return spdlog::level::info;
        case Level::warn: return spdlog::level::warn;
        case Level::error: return spdlog::level::err;
        case Level::off: return spdlog::level::off;
    }
    return spdlog::level::info;
}

}  // namespace

void set_level_from_string(const std::string& name) {
    spdlog::set_level(name.empty() ? spdlog::level::info : spdlog::level::from_str(name));
}

bool enabled(Level level) { return spdlog::should_log(to_spd(level)); }

void write(Level level, const std::string& message) { spdlog::log(to_spd(level), "{}", message); }

std::string fixed(double value, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, value);
    return buf;
}

}  // namespace stainlab::log
