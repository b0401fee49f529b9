// Copyright 2026 The MDPO Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace mdpo {

enum class ErrorCode {
  kInvalidArgument,
  kMalformedSolution,
  kMalformedAnswer,
  kDegenerateExpression,
  kEmptySequence,
  kShapeMismatch,
  kUnknownToken,
  kInsufficientWindows,
  kGenerator,
  kCacheMiss,
  kParse,
  kIo,
  kConfigMismatch,
  kSkippedBatch,
};

const char* ErrorCodeName(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// C API can map it onto a status value without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Parse failures additionally remember the 1-based line they occurred on
// (0 when the input is not line oriented).
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line = 0)
      : Error(ErrorCode::kParse,
              line == 0 ? message : "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Raised by generators; retryable errors come from transient transport
// failures and carry the number of attempts already made.
class GeneratorError : public Error {
 public:
  GeneratorError(ErrorCode code, const std::string& message, int attempts = 0,
                 bool retryable = false)
      : Error(code, message), attempts_(attempts), retryable_(retryable) {}

  int attempts() const noexcept { return attempts_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  int attempts_;
  bool retryable_;
};

}  // namespace mdpo
