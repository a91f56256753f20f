#include "safegp/log.hpp"

#include <iostream>
#include <mutex>

namespace safegp::log {
namespace {

std::mutex g_mutex;
Level g_min_level = Level::warn;

const char* level_name(Level level) {
  switch (level) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
  }
  return "?";
}

Sink g_sink = [](Level level, std::string_view message) {
  std::cerr << "[safegp " << level_name(level) << "] " << message << '\n';
};

}  // namespace

void set_sink(Sink sink) {
  std::lock_guard lock(g_mutex);
  g_sink = std::move(sink);
}

void set_min_level(Level level) {
  std::lock_guard lock(g_mutex);
  g_min_level = level;
}

void write(Level level, std::string_view message) {
  std::lock_guard lock(g_mutex);
  if (level < g_min_level || !g_sink) return;
  g_sink(level, message);
}

}  // namespace safegp::log
