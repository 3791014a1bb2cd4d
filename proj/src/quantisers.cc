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

#include "dsu/quantisers.h"

#include <numeric>
#include <string>

#include "dsu/error.h"
#include "dsu/random.h"

namespace dsu {

std::string_view GranularityName(Granularity g) {
  return g == Granularity::kFrame ? "frame" : "segment";
}

void WriteQuantisedTsv(std::ostream& out,
                       const std::vector<QuantisedSequence>& sequences) {
  out << "utterance_id\tposition\tgranularity\tlevel\tcode\n";
  for (const QuantisedSequence& q : sequences) {
    const std::string_view g = GranularityName(q.granularity);
    for (int pos = 0; pos < q.num_positions(); ++pos) {
      for (int level = 0; level < q.num_levels(); ++level) {
        out << q.utterance_id << '\t' << pos << '\t' << g << '\t'
            << (level + 1) << '\t' << q.codes[level][pos] << '\n';
      }
    }
  }
}

MatrixF Quantiser::LevelProbeVectors(const QuantisedSequence& q,
                                     int level) const {
  if (level < 1 || level > std::max(1, num_levels())) {
    Fail(ErrorKind::kInvalidArgument,
         name() + ": no level " + std::to_string(level));
  }
  return q.probe_vectors;
}

int Quantiser::total_budget() const {
  const std::vector<int> sizes = level_sizes();
  return std::accumulate(sizes.begin(), sizes.end(), 0);
}

std::vector<int> FrameToSegment(const Utterance& utt) {
  std::vector<int> owner(utt.features.num_frames(), -1);
  for (std::size_t s = 0; s < utt.segments.size(); ++s) {
    for (int f = utt.segments[s].start_frame; f < utt.segments[s].end_frame;
         ++f) {
      owner[f] = static_cast<int>(s);
    }
  }
  return owner;
}

MatrixF PooledSegments(const Utterance& utt) {
  MatrixF pooled(utt.segments.size(), utt.features.dim());
  for (std::size_t s = 0; s < utt.segments.size(); ++s) {
    const PhoneSegment& seg = utt.segments[s];
    pooled.row(s) = MeanPoolSegment(
        utt.features.frames.middleRows(seg.start_frame, seg.length()));
  }
  return pooled;
}

namespace {

KMeansConfig LevelConfig(const KMeansConfig& base, int k, int level) {
  KMeansConfig config = base;
  config.k = k;
  config.seed = DeriveSeed(base.seed, static_cast<uint64_t>(level));
  return config;
}

void CheckDim(const Codebook& cb, int dim, const std::string& who) {
  if (cb.dim() != dim) {
    Fail(ErrorKind::kDimensionMismatch,
         who + ": features have D=" + std::to_string(dim) +
             ", codebook has D=" + std::to_string(cb.dim()));
  }
}

// Pooled training segments: vowels, or every segment when all_phones.
MatrixF PooledTraining(const SplitView& train, bool all_phones,
                       std::vector<std::pair<const Utterance*, int>>* owners) {
  std::vector<std::pair<const Utterance*, int>> items;
  for (const Utterance* u : train.utterances()) {
    for (std::size_t s = 0; s < u->segments.size(); ++s) {
      if (all_phones || u->segments[s].is_vowel) {
        items.emplace_back(u, static_cast<int>(s));
      }
    }
  }
  MatrixF pooled(items.size(), train.feature_dim());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const PhoneSegment& seg = items[i].first->segments[items[i].second];
    pooled.row(i) = MeanPoolSegment(items[i].first->features.frames.middleRows(
        seg.start_frame, seg.length()));
  }
  if (owners != nullptr) *owners = std::move(items);
  return pooled;
}

void RequireItems(std::size_t available, int k, const std::string& what) {
  if (available < static_cast<std::size_t>(k)) {
    Fail(ErrorKind::kInsufficientData,
         what + ": need at least " + std::to_string(k) + " items, have " +
             std::to_string(available));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

QuantisedSequence LatentFrames::Quantise(const Utterance& utt) const {
  QuantisedSequence q;
  q.utterance_id = utt.features.utterance_id;
  q.granularity = Granularity::kFrame;
  q.probe_vectors = utt.features.frames;
  return q;
}

QuantisedSequence LatentPooled::Quantise(const Utterance& utt) const {
  QuantisedSequence q;
  q.utterance_id = utt.features.utterance_id;
  q.granularity = Granularity::kSegment;
  q.probe_vectors = PooledSegments(utt);
  return q;
}

// ---------------------------------------------------------------------------

Codebook FitClassic(const SplitView& train, int k, const KMeansConfig& base) {
  SplitAudit::RecordTrainingAccess(train.split());
  const MatrixF frames = StackFrames(train);
  RequireItems(static_cast<std::size_t>(frames.rows()), k, "classic k-means");
  return FitKMeans(frames, LevelConfig(base, k, 1), 1);
}

QuantisedSequence QuantiseClassic(const Codebook& codebook,
                                  const FeatureSequence& seq) {
  CheckDim(codebook, seq.dim(), "classic k-means");
  BatchAssignment a = codebook.AssignBatch(seq.frames, 1);
  QuantisedSequence q;
  q.utterance_id = seq.utterance_id;
  q.granularity = Granularity::kFrame;
  q.probe_vectors = codebook.Gather(a.codes);
  q.codes.push_back(std::move(a.codes));
  return q;
}

std::string ClassicKMeans::name() const {
  return "classic-kmeans-" + std::to_string(codebook_.size());
}

// ---------------------------------------------------------------------------

Codebook FitMeanPooled(const SplitView& train, int k,
                       const KMeansConfig& base) {
  SplitAudit::RecordTrainingAccess(train.split());
  const MatrixF pooled = PooledTraining(train, false, nullptr);
  RequireItems(static_cast<std::size_t>(pooled.rows()), k,
               "mean-pooled k-means");
  return FitKMeans(pooled, LevelConfig(base, k, 1), 1);
}

std::pair<int, RowVectorF> QuantisePooledSegment(
    const Codebook& codebook, const Eigen::Ref<const MatrixF>& seg_frames) {
  CheckDim(codebook, static_cast<int>(seg_frames.cols()), "mean-pooled k-means");
  return codebook.Assign(MeanPoolSegment(seg_frames));
}

QuantisedSequence QuantiseMeanPooled(const Codebook& codebook,
                                     const Utterance& utt) {
  CheckDim(codebook, utt.features.dim(), "mean-pooled k-means");
  BatchAssignment a = codebook.AssignBatch(PooledSegments(utt), 1);
  QuantisedSequence q;
  q.utterance_id = utt.features.utterance_id;
  q.granularity = Granularity::kSegment;
  q.probe_vectors = codebook.Gather(a.codes);
  q.codes.push_back(std::move(a.codes));
  return q;
}

std::string MeanPooledKMeans::name() const {
  return "mean-pooled-kmeans-" + std::to_string(codebook_.size());
}

// ---------------------------------------------------------------------------

SvcCodebooks FitSvc(const SplitView& train, int k_frame, int k_segment,
                    const KMeansConfig& base) {
  SplitAudit::RecordTrainingAccess(train.split());
  const MatrixF frames = StackFrames(train);
  RequireItems(static_cast<std::size_t>(frames.rows()), k_frame,
               "SVC frame codebook");
  const MatrixF pooled = PooledTraining(train, false, nullptr);
  RequireItems(static_cast<std::size_t>(pooled.rows()), k_segment,
               "SVC segment codebook");
  SvcCodebooks cb;
  cb.frame = FitKMeans(frames, LevelConfig(base, k_frame, 1), 1);
  cb.segment = FitKMeans(pooled, LevelConfig(base, k_segment, 2), 2);
  return cb;
}

RowVectorF FuseSvc(const Eigen::Ref<const RowVectorF>& frame_centroid,
                   const Eigen::Ref<const RowVectorF>& segment_centroid) {
  return (frame_centroid + segment_centroid) * 0.5f;
}

QuantisedSequence QuantiseSvc(const SvcCodebooks& cb, const Utterance& utt) {
  CheckDim(cb.frame, utt.features.dim(), "SVC");
  CheckDim(cb.segment, utt.features.dim(), "SVC");
  const BatchAssignment frame_codes = cb.frame.AssignBatch(utt.features.frames, 1);
  const BatchAssignment seg_codes = cb.segment.AssignBatch(PooledSegments(utt), 1);
  const std::vector<int> owner = FrameToSegment(utt);
  const int t = utt.features.num_frames();

  QuantisedSequence q;
  q.utterance_id = utt.features.utterance_id;
  q.granularity = Granularity::kFrame;
  q.codes.assign(2, std::vector<int>(t));
  q.probe_vectors.resize(t, utt.features.dim());
  for (int f = 0; f < t; ++f) {
    const int fc = frame_codes.codes[f];
    q.codes[0][f] = fc;
    if (owner[f] < 0) {
      q.codes[1][f] = kNoSegmentCode;
      q.probe_vectors.row(f) = cb.frame.centroid(fc);
    } else {
      const int sc = seg_codes.codes[owner[f]];
      q.codes[1][f] = sc;
      q.probe_vectors.row(f) =
          FuseSvc(cb.frame.centroid(fc), cb.segment.centroid(sc));
    }
  }
  return q;
}

std::string Svc::name() const {
  if (cb_.frame.size() == cb_.segment.size()) {
    return "svc-" + std::to_string(cb_.frame.size()) + "x2";
  }
  return "svc-" + std::to_string(cb_.frame.size()) + "+" +
         std::to_string(cb_.segment.size());
}

MatrixF Svc::LevelProbeVectors(const QuantisedSequence& q, int level) const {
  if (level == 2) return q.probe_vectors;
  if (level != 1) {
    Fail(ErrorKind::kInvalidArgument, name() + ": no level " +
                                          std::to_string(level));
  }
  return cb_.frame.Gather(q.codes[0]);
}

// ---------------------------------------------------------------------------

ResidualCodebooks FitResidual(const SplitView& train,
                              const ResidualOptions& options,
                              const KMeansConfig& base) {
  SplitAudit::RecordTrainingAccess(train.split());
  std::vector<std::pair<const Utterance*, int>> owners;
  const MatrixF pooled =
      PooledTraining(train, options.include_all_phones, &owners);
  RequireItems(static_cast<std::size_t>(pooled.rows()), options.k_phone,
               "residual k-means level 1");

  ResidualCodebooks cb;
  cb.variant = options.variant;
  cb.phone = FitKMeans(pooled, LevelConfig(base, options.k_phone, 1), 1);
  const BatchAssignment phone_codes = cb.phone.AssignBatch(pooled, base.workers);

  MatrixF residuals;
  if (options.variant == ResidualVariant::kSegmental) {
    residuals = pooled - cb.phone.Gather(phone_codes.codes);
  } else {
    Eigen::Index rows = 0;
    for (const auto& [u, s] : owners) rows += u->segments[s].length();
    residuals.resize(rows, train.feature_dim());
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < owners.size(); ++i) {
      const PhoneSegment& seg = owners[i].first->segments[owners[i].second];
      const auto c1 = cb.phone.centroid(phone_codes.codes[i]);
      for (int f = seg.start_frame; f < seg.end_frame; ++f, ++r) {
        residuals.row(r) = owners[i].first->features.frames.row(f) - c1;
      }
    }
  }
  RequireItems(static_cast<std::size_t>(residuals.rows()), options.k_residual,
               "residual k-means level 2");
  cb.residual =
      FitKMeans(residuals, LevelConfig(base, options.k_residual, 2), 2);
  return cb;
}

QuantisedSequence QuantiseResidual(const ResidualCodebooks& cb,
                                   const Utterance& utt) {
  CheckDim(cb.phone, utt.features.dim(), "residual k-means");
  CheckDim(cb.residual, utt.features.dim(), "residual k-means");
  const MatrixF pooled = PooledSegments(utt);
  const BatchAssignment phone_codes = cb.phone.AssignBatch(pooled, 1);

  QuantisedSequence q;
  q.utterance_id = utt.features.utterance_id;
  if (cb.variant == ResidualVariant::kSegmental) {
    q.granularity = Granularity::kSegment;
    const MatrixF c1 = cb.phone.Gather(phone_codes.codes);
    const BatchAssignment res_codes =
        cb.residual.AssignBatch(pooled - c1, 1);
    q.probe_vectors = c1 + cb.residual.Gather(res_codes.codes);
    q.codes = {phone_codes.codes, res_codes.codes};
    return q;
  }

  q.granularity = Granularity::kFrame;
  const std::vector<int> owner = FrameToSegment(utt);
  const int t = utt.features.num_frames();
  MatrixF c1(t, utt.features.dim());
  std::vector<int> level1(t);
  for (int f = 0; f < t; ++f) {
    if (owner[f] < 0) {
      level1[f] = kNoSegmentCode;
      c1.row(f).setZero();
    } else {
      level1[f] = phone_codes.codes[owner[f]];
      c1.row(f) = cb.phone.centroid(level1[f]);
    }
  }
  const BatchAssignment res_codes =
      cb.residual.AssignBatch(utt.features.frames - c1, 1);
  q.probe_vectors = c1 + cb.residual.Gather(res_codes.codes);
  q.codes = {std::move(level1), res_codes.codes};
  return q;
}

std::string ResidualKMeans::name() const {
  return std::string("residual-kmeans-") +
         (cb_.variant == ResidualVariant::kFrame ? "frame-" : "segmental-") +
         std::to_string(cb_.phone.size()) + "+" +
         std::to_string(cb_.residual.size());
}

MatrixF ResidualKMeans::LevelProbeVectors(const QuantisedSequence& q,
                                          int level) const {
  if (level == 2) return q.probe_vectors;
  if (level != 1) {
    Fail(ErrorKind::kInvalidArgument, name() + ": no level " +
                                          std::to_string(level));
  }
  MatrixF out(q.num_positions(), cb_.phone.dim());
  for (int p = 0; p < q.num_positions(); ++p) {
    const int code = q.codes[0][p];
    if (code == kNoSegmentCode) {
      out.row(p).setZero();
    } else {
      out.row(p) = cb_.phone.centroid(code);
    }
  }
  return out;
}

}  // namespace dsu
