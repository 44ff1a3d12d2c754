#include "dslr/error.hpp"

namespace dslr {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kUnknownSentence: return "UnknownSentence";
    case ErrorCode::kRemoteUnavailable: return "RemoteUnavailable";
    case ErrorCode::kRemoteMalformed: return "RemoteMalformed";
    case ErrorCode::kTimeout: return "Timeout";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kEmptyPool: return "EmptyPool";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kConfig: return "Config";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

}  // namespace dslr
