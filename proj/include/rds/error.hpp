#pragma once

#include <stdexcept>
#include <string>

namespace rds {

enum class ErrorKind {
  InvalidArgument,
  Parse,      // malformed input files or configuration
  Inference,  // no identifiable degree class
  Io,
};

/// Exception carrying a coarse category so the C API can map it to a status
/// code without inspecting message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error invalid_argument(const std::string& what) {
  return Error(ErrorKind::InvalidArgument, what);
}

inline Error parse_error(const std::string& what) {
  return Error(ErrorKind::Parse, what);
}

}  // namespace rds
