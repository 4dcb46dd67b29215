#pragma once

#include <string>

namespace ppimtt::log {

// Diagnostics always go to stderr; stdout is reserved for command results.
void info(const std::string& message);
void warn(const std::string& message);
void set_quiet(bool quiet);

}  // namespace ppimtt::log
