#pragma once

#include <stdexcept>
#include <string>

namespace mlc {

enum class ErrorKind {
  InvalidWidth,
  RepresentationDomain,
  Registration,
  InvalidArgument,
  EmptyScene,
  DegenerateLabel,
  DegenerateGeometry,
  Placement,
  Parse,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidWidth: return "invalid-width";
    case ErrorKind::RepresentationDomain: return "representation-domain";
    case ErrorKind::Registration: return "registration";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::EmptyScene: return "empty-scene";
    case ErrorKind::DegenerateLabel: return "degenerate-label";
    case ErrorKind::DegenerateGeometry: return "degenerate-geometry";
    case ErrorKind::Placement: return "placement";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it to an exit status without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// what() without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace mlc
