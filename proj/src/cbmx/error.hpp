/*
 * Copyright 2026 The cbmx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CBMX_ERROR_HPP_
#define CBMX_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace cbmx {

// Error kinds raised by the core. The C API maps each one to a status code.
enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kNonFiniteValue,
  kCannotFold,
  kNotCanonized,
  kIndexOutOfRange,
  kLengthMismatch,
  kEmpty,
  kConfigInvalid,
  kNotVisible,
  kOutOfBounds,
  kBadMagic,
  kCorruptOffsets,
  kIo,
};

const char* ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cbmx

#endif  // CBMX_ERROR_HPP_
