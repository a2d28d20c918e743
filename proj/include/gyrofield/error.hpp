#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gyrofield {

/// Failure categories. The CLI maps each one to its own exit code.
enum class ErrorKind {
  invalid_argument,
  range,
  shape,
  invalid_trace,
  coverage,
  point_at_infinity,
  non_contractive,
  degenerate_mask,
  ordering,
  contract,
  size,
  format,
  io,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::range: return "range";
    case ErrorKind::shape: return "shape";
    case ErrorKind::invalid_trace: return "invalid_trace";
    case ErrorKind::coverage: return "coverage";
    case ErrorKind::point_at_infinity: return "point_at_infinity";
    case ErrorKind::non_contractive: return "non_contractive";
    case ErrorKind::degenerate_mask: return "degenerate_mask";
    case ErrorKind::ordering: return "ordering";
    case ErrorKind::contract: return "contract";
    case ErrorKind::size: return "size";
    case ErrorKind::format: return "format";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Malformed file content; carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string& what)
      : Error(ErrorKind::format,
              what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

namespace detail {

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool ok, ErrorKind kind, const char* what) {
  if (!ok) fail(kind, what);
}

}  // namespace detail
}  // namespace gyrofield
