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

#ifndef DSU_TESTS_TEST_UTIL_H_
#define DSU_TESTS_TEST_UTIL_H_

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "dsu/linalg.h"
#include "dsu/random.h"
#include "dsu/synthetic.h"

namespace dsu::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dsu_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline std::string ReadFile(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void WriteFile(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

inline MatrixF RandomMatrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  MatrixF m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = static_cast<float>(scale * rng.Normal());
  }
  return m;
}

// Small corpus: 12 phones (8 vowels), 4 tones, D = 16.
inline SyntheticSpec SmallSpec(uint64_t seed = 7) {
  SyntheticSpec s;
  s.num_phones = 12;
  s.vowel_phones = 8;
  s.num_tones = 4;
  s.dim = 16;
  s.tone_subspace_dim = 4;
  s.segments_per_utterance = {6, 8};
  s.num_utterances = {60, 15, 15};
  s.seed = seed;
  return s;
}

}  // namespace dsu::testing

#endif  // DSU_TESTS_TEST_UTIL_H_
