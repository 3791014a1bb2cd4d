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
#ifndef DSU_FEATURE_IO_H_
#define DSU_FEATURE_IO_H_

#include <filesystem>
#include <string>
#include <vector>

#include "dsu/corpus.h"

namespace dsu {

// DSUF layout: "DSUF", u32 version (1), u32 T, u32 D, then T*D float32
// row-major. All little-endian.
inline constexpr char kFeatureMagic[4] = {'D', 'S', 'U', 'F'};
inline constexpr uint32_t kFeatureVersion = 1;

// Errors: kIo (missing), kFormat (magic/version), kTruncated, kNonFinite.
FeatureSequence LoadFeatureFile(const std::filesystem::path& path,
                                std::string utterance_id = {});
// Rejects invalid sequences before touching the file system.
void SaveFeatureFile(const FeatureSequence& seq,
                     const std::filesystem::path& path);

// Alignment TSV with header
//   utterance_id  start_frame  end_frame  phone  tone  is_vowel
// Rows for other utterances are ignored. Returned segments are sorted by
// start frame; overlaps and spans outside [0, T) are errors that name the
// offending line.
std::vector<PhoneSegment> LoadAlignments(const std::filesystem::path& path,
                                         const FeatureSequence& seq);
std::vector<PhoneSegment> ParseAlignments(const std::string& text,
                                          const FeatureSequence& seq,
                                          const std::string& source_name);
void SaveAlignments(const std::vector<PhoneSegment>& segments,
                    const std::filesystem::path& path);

}  // namespace dsu

#endif  // DSU_FEATURE_IO_H_
