#include "condensor/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace condensor::logging {

namespace {
std::atomic<Level> g_level{Level::warn};
std::mutex g_mutex;

const char* tag(Level l) {
  switch (l) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
    default: return "";
  }
}
}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void write(Level level, const std::string& message) {
  std::lock_guard lock(g_mutex);
  std::clog << "[" << tag(level) << "] " << message << '\n';
}

}  // namespace condensor::logging
