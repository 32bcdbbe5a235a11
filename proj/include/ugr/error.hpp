#ifndef UGR_ERROR_HPP
#define UGR_ERROR_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ugr {

enum class ErrorCode {
  shape_mismatch,
  invalid_argument,
  invalid_state,
  empty_input,
  parse_error,
  io_error,
  missing_artifact,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::invalid_state: return "invalid_state";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::missing_artifact: return "missing_artifact";
  }
  return "unknown";
}

/// Error with a machine-checkable code; parse errors also carry a byte offset.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg, int64_t offset = -1)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg),
        code_(code),
        offset_(offset) {}

  ErrorCode code() const { return code_; }
  int64_t offset() const { return offset_; }

 private:
  ErrorCode code_;
  int64_t offset_;
};

}  // namespace ugr

#endif
