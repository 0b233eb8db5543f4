#pragma once

#include <functional>
#include <string_view>

namespace lgcp::log {

enum class Level { Debug, Info, Warning };

using Sink = std::function<void(Level, std::string_view)>;

// Default sink writes "[level] message" to stderr. Returns the previous sink.
Sink set_sink(Sink sink);
void set_verbosity(Level minimum);

void debug(std::string_view msg);
void info(std::string_view msg);
void warning(std::string_view msg);

}  // namespace lgcp::log
