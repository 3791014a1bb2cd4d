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
#ifndef DSU_CORPUS_H_
#define DSU_CORPUS_H_

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsu/linalg.h"

namespace dsu {

// Null tone carried by consonants and other toneless segments. Segments with
// this tone never enter tone-probe training or evaluation.
inline constexpr std::string_view kNullTone = "T0";

// Continuous frame-level latents for one utterance.
struct FeatureSequence {
  std::string utterance_id;
  MatrixF frames;  // T x D
  double frame_rate_hz = 50.0;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }
};

// Throws kNonFinite / kInvalidArgument when T == 0, D == 0 or an entry is
// not finite.
void ValidateFeatureSequence(const FeatureSequence& seq);

struct PhoneSegment {
  std::string utterance_id;
  int start_frame = 0;  // inclusive
  int end_frame = 0;    // exclusive
  std::string phone_label;
  std::string tone_label;
  bool is_vowel = false;

  int length() const { return end_frame - start_frame; }
  bool has_tone() const { return is_vowel && tone_label != kNullTone; }

  bool operator==(const PhoneSegment&) const = default;
};

enum class Split { kTrain = 0, kValidation = 1, kTest = 2 };

std::string_view SplitName(Split split);
// Accepts "train", "validation", "test"; anything else is kInvalidArgument.
Split ParseSplit(std::string_view name);

struct ManifestEntry {
  std::string utterance_id;
  std::filesystem::path feature_path;    // as written, relative to manifest
  std::filesystem::path alignment_path;  // as written, relative to manifest
  Split split = Split::kTrain;
};

struct CorpusManifest {
  std::filesystem::path base_dir;  // directory the manifest lives in
  std::vector<ManifestEntry> entries;
  int feature_dim = 0;  // 0 until the first feature file is read
};

CorpusManifest LoadManifest(const std::filesystem::path& path);
void SaveManifest(const CorpusManifest& manifest,
                  const std::filesystem::path& path);

// A manifest entry with its files loaded.
struct Utterance {
  FeatureSequence features;
  std::vector<PhoneSegment> segments;
  Split split = Split::kTrain;
};

// In-memory corpus. Utterances keep manifest order.
struct Corpus {
  std::vector<Utterance> utterances;
  int feature_dim = 0;

  bool empty() const { return utterances.empty(); }
  std::size_t num_frames() const;
};

// Loads every feature and alignment file of the manifest and checks the
// manifest invariants (unique ids, consistent D).
Corpus LoadCorpus(const CorpusManifest& manifest);

// True when train, validation and test are all present.
bool HasAllSplits(const Corpus& corpus);

// Read-only view over the utterances of one split. Training entry points take
// this type so that the split they see is explicit and auditable.
class SplitView {
 public:
  SplitView(const Corpus& corpus, Split split);

  Split split() const { return split_; }
  const std::vector<const Utterance*>& utterances() const { return utts_; }
  std::size_t size() const { return utts_.size(); }
  bool empty() const { return utts_.empty(); }
  int feature_dim() const { return feature_dim_; }
  std::size_t num_frames() const;

 private:
  Split split_;
  int feature_dim_;
  std::vector<const Utterance*> utts_;
};

// Filters a manifest by split, preserving order.
CorpusManifest SplitDataset(const CorpusManifest& corpus, Split split);
CorpusManifest SplitDataset(const CorpusManifest& corpus,
                            std::string_view split_label);

// A vowel segment paired with the frame rows it covers.
struct VowelSegment {
  const Utterance* utterance = nullptr;
  int segment_index = 0;  // index into utterance->segments

  const PhoneSegment& segment() const {
    return utterance->segments[segment_index];
  }
  ConstFrameBlock frames() const {
    const PhoneSegment& s = segment();
    return utterance->features.frames.middleRows(s.start_frame, s.length());
  }
};

// Vowel segments in manifest order, then segment order.
std::vector<VowelSegment> ExtractVowelSegments(const Corpus& corpus);
std::vector<VowelSegment> ExtractVowelSegments(const SplitView& view);

// Component-wise mean of an L x D block, accumulated in double.
// L == 0 is kDegenerate.
RowVectorF MeanPoolSegment(const Eigen::Ref<const MatrixF>& seg_frames);

// Mean-pooled vowel segments of a split, one row per segment.
MatrixF PooledVowelMatrix(const std::vector<VowelSegment>& segments);

// Stacks every frame of the split (vowels and consonants) in order.
MatrixF StackFrames(const SplitView& view);

// Counts how many training entry points (codebook fits, codec training,
// probe training) were handed data from each split. Tests use it to assert
// that nothing is ever fit on the test split.
class SplitAudit {
 public:
  static void RecordTrainingAccess(Split split);
  static uint64_t TrainingAccesses(Split split);
  static void Reset();

 private:
  static std::array<std::atomic<uint64_t>, 3> counters_;
};

}  // namespace dsu

#endif  // DSU_CORPUS_H_
