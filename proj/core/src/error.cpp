#include "uedge/error.hpp"

namespace uedge {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::shape: return "shape_error";
    case ErrorKind::spec: return "spec_error";
    case ErrorKind::lookup: return "lookup_error";
    case ErrorKind::binding: return "binding_error";
    case ErrorKind::format: return "format_error";
    case ErrorKind::numeric: return "numeric_error";
    case ErrorKind::io: return "io_error";
    case ErrorKind::argument: return "argument_error";
  }
  return "error";
}

std::string_view to_string(FormatErrorCode code) noexcept {
  switch (code) {
    case FormatErrorCode::bad_magic: return "bad_magic";
    case FormatErrorCode::unsupported_version: return "unsupported_version";
    case FormatErrorCode::truncated: return "truncated";
    case FormatErrorCode::checksum_mismatch: return "checksum_mismatch";
    case FormatErrorCode::duplicate_name: return "duplicate_name";
    case FormatErrorCode::bad_dtype: return "bad_dtype";
    case FormatErrorCode::size_mismatch: return "size_mismatch";
    case FormatErrorCode::trailing_bytes: return "trailing_bytes";
    case FormatErrorCode::bad_header: return "bad_header";
    case FormatErrorCode::bad_content: return "bad_content";
  }
  return "format_error";
}

}  // namespace uedge
