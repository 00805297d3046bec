// Copyright 2026 The Veil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VEIL_COMMON_ERROR_H_
#define VEIL_COMMON_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace veil {

// Error categories. The CLI maps these onto its exit-code contract.
enum class ErrorCode {
  kInternal,
  kConfig,      // bad configuration value or unknown key
  kValidation,  // invalid argument to an operation
  kShape,       // tensor / dataset shape mismatch
  kNumeric,     // NaN, singularity, divergence
  kDependency,  // missing prerequisite artifact
  kSchema,      // attribute not present in a schema
  kFormat,      // corrupt or unsupported file
  kSampling,    // not enough eligible samples
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void Require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) Fail(code, message);
}

}  // namespace veil

#endif  // VEIL_COMMON_ERROR_H_
