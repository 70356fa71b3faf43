#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace pcinf::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3 };

// Verbosity comes from the PCINF_LOG environment variable
// (debug|info|warn|error); default warn.
inline Level threshold() {
    static Level level = [] {
        const char* env = std::getenv("PCINF_LOG");
        if (!env) return Level::warn;
        std::string v(env);
        if (v == "debug") return Level::debug;
        if (v == "info") return Level::info;
        if (v == "error") return Level::error;
        return Level::warn;
    }();
    return level;
}

inline void emit(Level level, const std::string& message) {
    if (level < threshold()) return;
    static const char* names[] = {"debug", "info", "warn", "error"};
    std::cerr << "[pcinf:" << names[static_cast<int>(level)] << "] " << message << '\n';
}

inline void debug(const std::string& m) { emit(Level::debug, m); }
inline void info(const std::string& m) { emit(Level::info, m); }
inline void warn(const std::string& m) { emit(Level::warn, m); }
inline void error(const std::string& m) { emit(Level::error, m); }

}  // namespace pcinf::log
