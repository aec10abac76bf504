// Copyright 2026 The SLF Authors. All Rights Reserved.
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
#include <string_view>

namespace slf {

/// Broad failure category. The CLI prints it as the machine-parsable prefix
/// of its one-line error message.
enum class ErrorKind {
  kArgument,   // caller passed an out-of-range or inconsistent value
  kShape,      // tensor shapes do not compose
  kFormat,     // malformed file contents
  kIo,         // missing or unreadable file
  kConfig,     // bad experiment configuration
  kNumeric,    // NaN/Inf during training
  kInternal,   // broken invariant inside the library
};

std::string_view error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace slf
