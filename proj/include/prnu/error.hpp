#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace prnu {

// Broad failure classes. The CLI maps them onto its exit codes.
enum class ErrorKind {
  usage,        // bad arguments, bad manifest/config columns
  data,         // malformed or inconsistent input data
  unsupported,  // valid input using a feature we do not handle
  io,           // filesystem failures
  internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& msg) { return Error(ErrorKind::usage, msg); }
inline Error data_error(const std::string& msg) { return Error(ErrorKind::data, msg); }
inline Error io_error(const std::string& msg) { return Error(ErrorKind::io, msg); }

/// Raised by the binary file readers (fingerprint, mask). Carries the byte
/// range that could not be satisfied when the file is truncated.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t begin = 0, std::uint64_t end = 0)
      : Error(ErrorKind::data, what), begin_(begin), end_(end) {}
  std::uint64_t missing_begin() const noexcept { return begin_; }
  std::uint64_t missing_end() const noexcept { return end_; }

 private:
  std::uint64_t begin_;
  std::uint64_t end_;
};

}  // namespace prnu
