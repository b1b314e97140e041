#pragma once

#include <string_view>

namespace mhng::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Read once from MHNG_LOG (error, warn, info, debug); defaults to warn.
Level threshold() noexcept;
bool enabled(Level level) noexcept;
void write(Level level, std::string_view message);

inline void info(std::string_view m) { write(Level::Info, m); }
inline void warn(std::string_view m) { write(Level::Warn, m); }
inline void debug(std::string_view m) { write(Level::Debug, m); }

}  // namespace mhng::log
