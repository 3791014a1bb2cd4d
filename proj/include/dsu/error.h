// Copyright 2026 The dsu-tone Authors
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

#ifndef DSU_ERROR_H_
#define DSU_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace dsu {

enum class ErrorKind {
  kIo,                 // missing or unwritable file
  kFormat,             // bad magic, version, header or malformed row
  kTruncated,          // payload shorter than the header declares
  kNonFinite,          // NaN or Inf where finite values are required
  kInvalidArgument,    // violated precondition on a config or input
  kInsufficientData,   // fewer items than codes, empty split, ...
  kDimensionMismatch,
  kOverlap,            // alignment segments overlap
  kRange,              // alignment span outside [0, T)
  kDegenerate,         // zero-length segment, single-class training set
  kDivergence,         // non-finite loss during training
};

std::string_view ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace dsu

#endif  // DSU_ERROR_H_
