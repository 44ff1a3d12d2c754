#pragma once

#include <stdexcept>
#include <string>

namespace dslr {

/// Failure categories shared by the C++ core and the C API status codes.
enum class ErrorCode {
  kInvalidArgument = 1,
  kIo,
  kParse,
  kDuplicateId,
  kEmptyCorpus,
  kVersionMismatch,
  kUnknownSentence,
  kRemoteUnavailable,
  kRemoteMalformed,
  kTimeout,
  kEmptyInput,
  kEmptyPool,
  kShapeMismatch,
  kConfig,
  kInternal,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Upstream failures come from a scorer/reader/tokenizer service rather than
  /// from the caller's inputs.
  bool is_upstream() const noexcept {
    return code_ == ErrorCode::kRemoteUnavailable ||
           code_ == ErrorCode::kRemoteMalformed || code_ == ErrorCode::kTimeout;
  }

 private:
  ErrorCode code_;
};

}  // namespace dslr
