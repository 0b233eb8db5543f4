#include "lgcp/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace lgcp::log {
namespace {

std::mutex g_mutex;
Level g_minimum = Level::Info;

void stderr_sink(Level level, std::string_view msg) {
  static constexpr const char* names[] = {"debug", "info", "warning"};
  std::cerr << '[' << names[static_cast<int>(level)] << "] " << msg << '\n';
}

Sink& sink() {
  static Sink s = stderr_sink;
  return s;
}

void emit(Level level, std::string_view msg) {
  std::lock_guard lock(g_mutex);
  if (level < g_minimum) return;
  if (sink()) sink()(level, msg);
}

}  // namespace

Sink set_sink(Sink s) {
  std::lock_guard lock(g_mutex);
  return std::exchange(sink(), std::move(s));
}

void set_verbosity(Level minimum) {
  std::lock_guard lock(g_mutex);
  g_minimum = minimum;
}

void debug(std::string_view msg) { emit(Level::Debug, msg); }
void info(std::string_view msg) { emit(Level::Info, msg); }
void warning(std::string_view msg) { emit(Level::Warning, msg); }

}  // namespace lgcp::log
