#pragma once

#include <stdexcept>
#include <string>

namespace mpfl {

enum class ErrorKind {
  Usage,
  Io,
  Schema,
  Validation,
  Shape,
  CapExceeded,
  NoFeasibleAction,
  Config,
  NonFinite,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Io: return "io";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::CapExceeded: return "cap-exceeded";
    case ErrorKind::NoFeasibleAction: return "no-feasible-action";
    case ErrorKind::Config: return "config";
    case ErrorKind::NonFinite: return "non-finite";
  }
  return "unknown";
}

// Every error raised by the library carries a category so the CLI can map it
// to an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline int exit_code(ErrorKind kind) { return 2 + static_cast<int>(kind); }

}  // namespace mpfl
