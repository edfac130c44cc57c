// Copyright 2026 The CSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace cse {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidState,
  kDegenerateSignal,
  kUnsupported,
  kIo,
  kParse,
  kValidation,
  kProvider,
  kMissingEmbedding,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

  // Process exit code used by the CLI: 2 config/validation, 3 provider, 4 I/O.
  int exit_code() const {
    switch (code_) {
      case ErrorCode::kProvider:
      case ErrorCode::kMissingEmbedding:
        return 3;
      case ErrorCode::kIo:
        return 4;
      default:
        return 2;
    }
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void throw_error(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

inline void check(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) throw Error(code, msg);
}

inline void check_arg(bool cond, const std::string& msg) {
  check(cond, ErrorCode::kInvalidArgument, msg);
}

}  // namespace cse
