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
#ifndef DSU_SYNTHETIC_H_
#define DSU_SYNTHETIC_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "dsu/corpus.h"
#include "dsu/linalg.h"

namespace dsu {

struct IntRange {
  int min = 1;
  int max = 1;
};

// Two-factor latent generator: a large per-phone mean plus a small tone
// contour living in a dedicated low-dimensional subspace, plus isotropic
// noise. Frame i of a segment with phone p, tone t and length L is
//   mu_p + B * c_t(i / L) + eps,   eps ~ N(0, noise_scale^2 I).
struct SyntheticSpec {
  int num_phones = 50;
  int num_tones = 4;
  int dim = 64;
  double phone_spread = 1.0;  // sigma_p
  double tone_scale = 0.15;   // sigma_t
  double noise_scale = 0.05;  // sigma_n
  int tone_subspace_dim = 8;
  // The first vowel_phones phones are vowels; the rest are consonants.
  int vowel_phones = 40;
  // Norm of each tone template component relative to tone_scale.
  double template_gain = 0.5;
  IntRange frames_per_segment{6, 14};            // vowels
  IntRange consonant_frames_per_segment{3, 7};
  IntRange segments_per_utterance{10, 14};
  std::array<int, 3> num_utterances{1400, 180, 180};  // train/val/test
  double frame_rate_hz = 50.0;
  uint64_t seed = 42;
};

// Throws kInvalidArgument when an invariant is violated (tone_scale must be
// below phone_spread, all counts >= 1, tone subspace no wider than dim).
void ValidateSyntheticSpec(const SyntheticSpec& spec);

void to_json(nlohmann::json& j, const SyntheticSpec& spec);
void from_json(const nlohmann::json& j, SyntheticSpec& spec);

struct SyntheticGroundTruth {
  MatrixD phone_means;  // P x D
  MatrixD tone_basis;   // D x d_tone, orthonormal columns
  MatrixD tone_levels;  // num_tones x d_tone
  MatrixD tone_slopes;  // num_tones x d_tone, zero rows for level tones
  std::array<int, 3> vowel_segments{0, 0, 0};  // per split
  std::array<int, 3> segments{0, 0, 0};
  std::array<std::map<std::string, int>, 3> phone_counts;  // vowels only
  std::array<std::map<std::string, int>, 3> tone_counts;   // vowels only
};

std::string PhoneLabel(int phone);
std::string ToneLabel(int tone);  // 0-based tone -> "T1", "T2", ...

// Tone template coefficients c_t(s) for normalised time s in [0, 1).
VectorD ToneTemplate(const SyntheticGroundTruth& truth,
                     const SyntheticSpec& spec, int tone, double s);

struct SyntheticCorpus {
  Corpus corpus;
  SyntheticGroundTruth truth;
};

// Builds the corpus in memory. Same spec (including seed) gives bit-identical
// frames and alignments.
SyntheticCorpus GenerateSyntheticInMemory(const SyntheticSpec& spec);

// Writes features/, alignments/ and manifest.json under out_dir and returns
// the manifest path. kIo when out_dir cannot be written.
std::filesystem::path WriteCorpus(const Corpus& corpus,
                                  const std::filesystem::path& out_dir);

std::filesystem::path GenerateSyntheticCorpus(
    const SyntheticSpec& spec, const std::filesystem::path& out_dir,
    SyntheticGroundTruth* truth = nullptr);

}  // namespace dsu

#endif  // DSU_SYNTHETIC_H_
