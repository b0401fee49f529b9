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
#include "mdpo/error.hpp"

namespace mdpo {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMalformedSolution: return "MalformedSolution";
    case ErrorCode::kMalformedAnswer: return "MalformedAnswer";
    case ErrorCode::kDegenerateExpression: return "DegenerateExpression";
    case ErrorCode::kEmptySequence: return "EmptySequence";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kUnknownToken: return "UnknownToken";
    case ErrorCode::kInsufficientWindows: return "InsufficientWindows";
    case ErrorCode::kGenerator: return "GeneratorError";
    case ErrorCode::kCacheMiss: return "CacheMiss";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kConfigMismatch: return "ConfigMismatch";
    case ErrorCode::kSkippedBatch: return "SkippedBatch";
  }
  return "Unknown";
}

}  // namespace mdpo
