#pragma once

#include <atomic>
#include <iostream>
#include <string_view>

namespace qmetasur::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Quiet = 3 };

inline auto threshold() -> std::atomic<Level>& {
    static std::atomic<Level> level{Level::Info};
    return level;
}

inline void set_level(Level l) { threshold().store(l); }

inline void write(Level l, std::string_view tag, std::string_view msg) {
    if (l >= threshold().load()) {
        std::clog << '[' << tag << "] " << msg << '\n';
    }
}

inline void debug(std::string_view msg) { write(Level::Debug, "debug", msg); }
inline void info(std::string_view msg) { write(Level::Info, "info", msg); }
inline void warn(std::string_view msg) { write(Level::Warn, "warn", msg); }

} // namespace qmetasur::log
