#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace uedge {

enum class ErrorKind {
  shape,    // tensor dimension mismatch
  spec,     // invalid model specification
  lookup,   // unknown preset / name
  binding,  // missing or extra parameter tensor
  format,   // malformed file
  numeric,  // non-finite values, degenerate arithmetic
  io,       // filesystem failure
  argument  // invalid argument to an operation
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Distinct failure modes of the weight-file reader.
enum class FormatErrorCode {
  bad_magic,
  unsupported_version,
  truncated,
  checksum_mismatch,
  duplicate_name,
  bad_dtype,
  size_mismatch,
  trailing_bytes,
  bad_header,
  bad_content
};

std::string_view to_string(FormatErrorCode code) noexcept;

class FormatError : public Error {
 public:
  FormatError(FormatErrorCode code, const std::string& what)
      : Error(ErrorKind::format, what), code_(code) {}
  FormatErrorCode code() const noexcept { return code_; }

 private:
  FormatErrorCode code_;
};

[[noreturn]] inline void throw_shape(const std::string& msg) { throw Error(ErrorKind::shape, msg); }

}  // namespace uedge
