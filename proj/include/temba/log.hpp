#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace temba::log {

enum class Level { error = 0, info = 1, debug = 2 };

// From TEMBA_LOG={error|info|debug}; info when unset or unrecognized.
inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("TEMBA_LOG");
    if (!env) return Level::info;
    const std::string_view v(env);
    if (v == "error") return Level::error;
    if (v == "debug") return Level::debug;
    return Level::info;
  }();
  return level;
}

inline void write(Level lvl, std::string_view tag, const std::string& msg) {
  if (static_cast<int>(lvl) > static_cast<int>(threshold())) return;
  std::cerr << "[" << tag << "] " << msg << '\n';
}

inline void error(const std::string& msg) { write(Level::error, "error", msg); }
inline void info(const std::string& msg) { write(Level::info, "info", msg); }
inline void debug(const std::string& msg) { write(Level::debug, "debug", msg); }

}  // namespace temba::log
