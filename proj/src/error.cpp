#include "patchlikely/error.hpp"

#include <atomic>
#include <iostream>

namespace patchlikely {

namespace {
std::atomic<bool> g_warnings_enabled{true};
std::atomic<int> g_warning_count{0};
}  // namespace

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape:
      return "shape error";
    case ErrorKind::kInvalidArgument:
      return "invalid argument";
    case ErrorKind::kNumerical:
      return "numerical error";
    case ErrorKind::kUnsupported:
      return "unsupported";
    case ErrorKind::kIo:
      return "i/o error";
    case ErrorKind::kFormat:
      return "format error";
  }
  return "error";
}

void warn(const std::string& message) {
  ++g_warning_count;
  if (g_warnings_enabled) std::cerr << "warning: " << message << "\n";
}

void set_warnings_enabled(bool enabled) { g_warnings_enabled = enabled; }

int warning_count() { return g_warning_count; }

}  // namespace patchlikely
