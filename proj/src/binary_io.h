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
#ifndef DSU_SRC_BINARY_IO_H_
#define DSU_SRC_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>

#include "dsu/error.h"

namespace dsu::internal {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline void WriteU32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void WriteF32(std::ostream& out, const float* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(n * sizeof(float)));
}

inline bool ReadU32(std::istream& in, uint32_t* v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(v), sizeof(*v)));
}

inline bool ReadF32(std::istream& in, float* data, std::size_t n) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(data),
                                   static_cast<std::streamsize>(
                                       n * sizeof(float))));
}

// Reads and checks a 4-byte magic followed by a u32 version.
inline void ReadHeader(std::istream& in, const char (&magic)[4],
                       uint32_t version, const std::string& name) {
  char got[4];
  if (!in.read(got, 4)) {
    Fail(ErrorKind::kTruncated, name + ": file too short for header");
  }
  if (std::memcmp(got, magic, 4) != 0) {
    Fail(ErrorKind::kFormat, name + ": bad magic, expected " +
                                 std::string(magic, 4));
  }
  uint32_t v = 0;
  if (!ReadU32(in, &v)) {
    Fail(ErrorKind::kTruncated, name + ": file too short for header");
  }
  if (v != version) {
    Fail(ErrorKind::kFormat,
         name + ": unsupported version " + std::to_string(v));
  }
}

}  // namespace dsu::internal

#endif  // DSU_SRC_BINARY_IO_H_
