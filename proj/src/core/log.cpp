#include "log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace mhng::log {

Level threshold() noexcept {
  static const Level level = [] {
    const char* v = std::getenv("MHNG_LOG");
    const std::string s = v ? v : "";
    if (s == "error") return Level::Error;
    if (s == "info") return Level::Info;
    if (s == "debug") return Level::Debug;
    return Level::Warn;
  }();
  return level;
}

bool enabled(Level level) noexcept { return static_cast<int>(level) <= static_cast<int>(threshold()); }

void write(Level level, std::string_view message) {
  if (!enabled(level)) return;
  static std::mutex mu;
  static constexpr const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(mu);
  std::cerr << '[' << names[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace mhng::log
