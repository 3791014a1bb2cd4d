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

#ifndef DSU_QUANTISERS_H_
#define DSU_QUANTISERS_H_

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "dsu/corpus.h"
#include "dsu/kmeans.h"
#include "dsu/linalg.h"

namespace dsu {

enum class Granularity { kFrame, kSegment };

std::string_view GranularityName(Granularity g);

// Code emitted for the segment-derived level of a frame that no alignment
// segment covers. Such frames never reach a probe.
inline constexpr int kNoSegmentCode = -1;

// Discrete codes for one utterance plus the vector each code tuple maps to.
// Frame granularity has one position per frame; segment granularity has one
// position per alignment segment (vowels and consonants alike).
struct QuantisedSequence {
  std::string utterance_id;
  Granularity granularity = Granularity::kFrame;
  std::vector<std::vector<int>> codes;  // [level][position]
  MatrixF probe_vectors;                // positions x D

  int num_positions() const { return static_cast<int>(probe_vectors.rows()); }
  int num_levels() const { return static_cast<int>(codes.size()); }
};

// Writes "utterance_id position granularity level code" rows (levels are
// 1-based) under a header line.
void WriteQuantisedTsv(std::ostream& out,
                       const std::vector<QuantisedSequence>& sequences);

// Common interface of every representation that can be probed: the
// continuous baseline, the k-means families and the neural codec.
class Quantiser {
 public:
  virtual ~Quantiser() = default;

  virtual std::string name() const = 0;
  virtual Granularity granularity() const = 0;
  // Codes per level; empty for the continuous baseline.
  virtual std::vector<int> level_sizes() const = 0;
  virtual QuantisedSequence Quantise(const Utterance& utt) const = 0;
  // Probe vectors composed from the first `level` levels (1-based).
  // kInvalidArgument for a level the quantiser does not have.
  virtual MatrixF LevelProbeVectors(const QuantisedSequence& q,
                                    int level) const;

  int num_levels() const { return static_cast<int>(level_sizes().size()); }
  int total_budget() const;
};

// ---------------------------------------------------------------------------
// Continuous baselines.

class LatentFrames final : public Quantiser {
 public:
  std::string name() const override { return "latent"; }
  Granularity granularity() const override { return Granularity::kFrame; }
  std::vector<int> level_sizes() const override { return {}; }
  QuantisedSequence Quantise(const Utterance& utt) const override;
};

class LatentPooled final : public Quantiser {
 public:
  std::string name() const override { return "latent-pooled"; }
  Granularity granularity() const override { return Granularity::kSegment; }
  std::vector<int> level_sizes() const override { return {}; }
  QuantisedSequence Quantise(const Utterance& utt) const override;
};

// ---------------------------------------------------------------------------
// Classic frame-level k-means.

Codebook FitClassic(const SplitView& train, int k, const KMeansConfig& base);
QuantisedSequence QuantiseClassic(const Codebook& codebook,
                                  const FeatureSequence& seq);

class ClassicKMeans final : public Quantiser {
 public:
  explicit ClassicKMeans(Codebook codebook) : codebook_(std::move(codebook)) {}
  std::string name() const override;
  Granularity granularity() const override { return Granularity::kFrame; }
  std::vector<int> level_sizes() const override { return {codebook_.size()}; }
  QuantisedSequence Quantise(const Utterance& utt) const override {
    return QuantiseClassic(codebook_, utt.features);
  }
  const Codebook& codebook() const { return codebook_; }

 private:
  Codebook codebook_;
};

// ---------------------------------------------------------------------------
// Mean-pooled segment k-means.

// Fit on mean-pooled vowel segments of the training split.
Codebook FitMeanPooled(const SplitView& train, int k, const KMeansConfig& base);
// One code for one segment's frames. kDegenerate on an empty segment.
std::pair<int, RowVectorF> QuantisePooledSegment(
    const Codebook& codebook, const Eigen::Ref<const MatrixF>& seg_frames);
QuantisedSequence QuantiseMeanPooled(const Codebook& codebook,
                                     const Utterance& utt);

class MeanPooledKMeans final : public Quantiser {
 public:
  explicit MeanPooledKMeans(Codebook codebook)
      : codebook_(std::move(codebook)) {}
  std::string name() const override;
  Granularity granularity() const override { return Granularity::kSegment; }
  std::vector<int> level_sizes() const override { return {codebook_.size()}; }
  QuantisedSequence Quantise(const Utterance& utt) const override {
    return QuantiseMeanPooled(codebook_, utt);
  }
  const Codebook& codebook() const { return codebook_; }

 private:
  Codebook codebook_;
};

// ---------------------------------------------------------------------------
// Segmentation-variant codebooks: each frame gets the midpoint of its
// frame-level centroid and its segment's pooled centroid.

struct SvcCodebooks {
  Codebook frame;    // level 1, fit on all training frames
  Codebook segment;  // level 2, fit on pooled training vowel segments
};

SvcCodebooks FitSvc(const SplitView& train, int k_frame, int k_segment,
                    const KMeansConfig& base);
QuantisedSequence QuantiseSvc(const SvcCodebooks& codebooks,
                              const Utterance& utt);
// Midpoint used for fusion, computed in float exactly as QuantiseSvc does.
RowVectorF FuseSvc(const Eigen::Ref<const RowVectorF>& frame_centroid,
                   const Eigen::Ref<const RowVectorF>& segment_centroid);

class Svc final : public Quantiser {
 public:
  explicit Svc(SvcCodebooks codebooks) : cb_(std::move(codebooks)) {}
  std::string name() const override;
  Granularity granularity() const override { return Granularity::kFrame; }
  std::vector<int> level_sizes() const override {
    return {cb_.frame.size(), cb_.segment.size()};
  }
  QuantisedSequence Quantise(const Utterance& utt) const override {
    return QuantiseSvc(cb_, utt);
  }
  // Level 1: frame centroid. Level 2: fused midpoint.
  MatrixF LevelProbeVectors(const QuantisedSequence& q,
                            int level) const override;
  const SvcCodebooks& codebooks() const { return cb_; }

 private:
  SvcCodebooks cb_;
};

// ---------------------------------------------------------------------------
// Residual k-means: a coarse codebook on pooled segments, then a codebook on
// what is left after subtracting each item's coarse centroid.

enum class ResidualVariant { kFrame, kSegmental };

struct ResidualCodebooks {
  Codebook phone;     // level 1
  Codebook residual;  // level 2
  ResidualVariant variant = ResidualVariant::kSegmental;
};

struct ResidualOptions {
  int k_phone = 50;
  int k_residual = 450;
  ResidualVariant variant = ResidualVariant::kSegmental;
  // Level 1 is fit on vowel segments unless this is set.
  bool include_all_phones = false;
};

ResidualCodebooks FitResidual(const SplitView& train,
                              const ResidualOptions& options,
                              const KMeansConfig& base);
QuantisedSequence QuantiseResidual(const ResidualCodebooks& codebooks,
                                   const Utterance& utt);

class ResidualKMeans final : public Quantiser {
 public:
  explicit ResidualKMeans(ResidualCodebooks codebooks)
      : cb_(std::move(codebooks)) {}
  std::string name() const override;
  Granularity granularity() const override {
    return cb_.variant == ResidualVariant::kFrame ? Granularity::kFrame
                                                  : Granularity::kSegment;
  }
  std::vector<int> level_sizes() const override {
    return {cb_.phone.size(), cb_.residual.size()};
  }
  QuantisedSequence Quantise(const Utterance& utt) const override {
    return QuantiseResidual(cb_, utt);
  }
  // Level 1: phone centroid. Level 2: phone + residual centroid.
  MatrixF LevelProbeVectors(const QuantisedSequence& q,
                            int level) const override;
  const ResidualCodebooks& codebooks() const { return cb_; }

 private:
  ResidualCodebooks cb_;
};

// Per-frame index of the covering segment, -1 where none covers the frame.
std::vector<int> FrameToSegment(const Utterance& utt);

// Mean-pooled vectors of every segment of an utterance, one row each.
MatrixF PooledSegments(const Utterance& utt);

}  // namespace dsu

#endif  // DSU_QUANTISERS_H_
