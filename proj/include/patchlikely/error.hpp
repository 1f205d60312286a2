#pragma once

#include <stdexcept>
#include <string>

namespace patchlikely {

enum class ErrorKind {
  kShape,
  kInvalidArgument,
  kNumerical,
  kUnsupported,
  kIo,
  kFormat,
};

const char* to_string(ErrorKind kind);

// Every failure surfaced by the library carries a kind so callers (the CLI in
// particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Emits a warning line on stderr. Tests can silence it.
void warn(const std::string& message);
void set_warnings_enabled(bool enabled);
int warning_count();

}  // namespace patchlikely
