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
#include "dsu/corpus.h"

#include <fstream>
#include <set>

#include <json.hpp>

#include "dsu/error.h"
#include "dsu/feature_io.h"

namespace dsu {

namespace fs = std::filesystem;

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kTruncated: return "truncated";
    case ErrorKind::kNonFinite: return "non-finite";
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kInsufficientData: return "insufficient-data";
    case ErrorKind::kDimensionMismatch: return "dimension-mismatch";
    case ErrorKind::kOverlap: return "overlap";
    case ErrorKind::kRange: return "range";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kDivergence: return "divergence";
  }
  return "unknown";
}

void ValidateFeatureSequence(const FeatureSequence& seq) {
  if (seq.frames.rows() < 1 || seq.frames.cols() < 1) {
    Fail(ErrorKind::kInvalidArgument,
         "feature sequence '" + seq.utterance_id + "' has an empty shape");
  }
  if (!seq.frames.allFinite()) {
    Fail(ErrorKind::kNonFinite,
         "feature sequence '" + seq.utterance_id + "' has non-finite values");
  }
}

std::string_view SplitName(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "train";
}

Split ParseSplit(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  Fail(ErrorKind::kInvalidArgument,
       "unknown split label '" + std::string(name) +
           "' (expected train, validation or test)");
}

CorpusManifest LoadManifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, "cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
  if (!doc.is_array()) {
    Fail(ErrorKind::kFormat, path.string() + ": manifest must be a JSON array");
  }
  CorpusManifest manifest;
  manifest.base_dir = path.parent_path();
  std::set<std::string> seen;
  for (const auto& item : doc) {
    ManifestEntry e;
    try {
      e.utterance_id = item.at("id").get<std::string>();
      e.feature_path = item.at("features").get<std::string>();
      e.alignment_path = item.at("alignments").get<std::string>();
      e.split = ParseSplit(item.at("split").get<std::string>());
    } catch (const nlohmann::json::exception& ex) {
      Fail(ErrorKind::kFormat, path.string() + ": bad entry: " + ex.what());
    }
    if (!seen.insert(e.utterance_id).second) {
      Fail(ErrorKind::kFormat,
           path.string() + ": duplicate utterance id '" + e.utterance_id + "'");
    }
    for (const fs::path& p : {e.feature_path, e.alignment_path}) {
      if (!fs::exists(manifest.base_dir / p)) {
        Fail(ErrorKind::kIo, path.string() + ": referenced file " +
                                 (manifest.base_dir / p).string() +
                                 " does not exist");
      }
    }
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

void SaveManifest(const CorpusManifest& manifest, const fs::path& path) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const ManifestEntry& e : manifest.entries) {
    doc.push_back({{"id", e.utterance_id},
                   {"features", e.feature_path.generic_string()},
                   {"alignments", e.alignment_path.generic_string()},
                   {"split", std::string(SplitName(e.split))}});
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot write manifest " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) Fail(ErrorKind::kIo, "write failed for " + path.string());
}

std::size_t Corpus::num_frames() const {
  std::size_t n = 0;
  for (const Utterance& u : utterances) n += u.features.num_frames();
  return n;
}

Corpus LoadCorpus(const CorpusManifest& manifest) {
  Corpus corpus;
  corpus.feature_dim = manifest.feature_dim;
  corpus.utterances.reserve(manifest.entries.size());
  for (const ManifestEntry& e : manifest.entries) {
    Utterance u;
    u.split = e.split;
    u.features =
        LoadFeatureFile(manifest.base_dir / e.feature_path, e.utterance_id);
    if (corpus.feature_dim == 0) corpus.feature_dim = u.features.dim();
    if (u.features.dim() != corpus.feature_dim) {
      Fail(ErrorKind::kDimensionMismatch,
           "utterance '" + e.utterance_id + "' has D=" +
               std::to_string(u.features.dim()) + ", corpus has D=" +
               std::to_string(corpus.feature_dim));
    }
    u.segments =
        LoadAlignments(manifest.base_dir / e.alignment_path, u.features);
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

bool HasAllSplits(const Corpus& corpus) {
  bool seen[3] = {false, false, false};
  for (const Utterance& u : corpus.utterances) {
    seen[static_cast<int>(u.split)] = true;
  }
  return seen[0] && seen[1] && seen[2];
}

SplitView::SplitView(const Corpus& corpus, Split split)
    : split_(split), feature_dim_(corpus.feature_dim) {
  for (const Utterance& u : corpus.utterances) {
    if (u.split == split) utts_.push_back(&u);
  }
}

std::size_t SplitView::num_frames() const {
  std::size_t n = 0;
  for (const Utterance* u : utts_) n += u->features.num_frames();
  return n;
}

CorpusManifest SplitDataset(const CorpusManifest& corpus, Split split) {
  CorpusManifest out;
  out.base_dir = corpus.base_dir;
  out.feature_dim = corpus.feature_dim;
  for (const ManifestEntry& e : corpus.entries) {
    if (e.split == split) out.entries.push_back(e);
  }
  return out;
}

CorpusManifest SplitDataset(const CorpusManifest& corpus,
                            std::string_view split_label) {
  return SplitDataset(corpus, ParseSplit(split_label));
}

namespace {

void AppendVowels(const Utterance& u, std::vector<VowelSegment>* out) {
  for (std::size_t i = 0; i < u.segments.size(); ++i) {
    if (u.segments[i].is_vowel) {
      out->push_back(VowelSegment{&u, static_cast<int>(i)});
    }
  }
}

}  // namespace

std::vector<VowelSegment> ExtractVowelSegments(const Corpus& corpus) {
  std::vector<VowelSegment> out;
  for (const Utterance& u : corpus.utterances) AppendVowels(u, &out);
  return out;
}

std::vector<VowelSegment> ExtractVowelSegments(const SplitView& view) {
  std::vector<VowelSegment> out;
  for (const Utterance* u : view.utterances()) AppendVowels(*u, &out);
  return out;
}

RowVectorF MeanPoolSegment(const Eigen::Ref<const MatrixF>& seg_frames) {
  if (seg_frames.rows() == 0) {
    Fail(ErrorKind::kDegenerate, "cannot mean-pool an empty segment");
  }
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(seg_frames.cols());
  for (Eigen::Index r = 0; r < seg_frames.rows(); ++r) {
    sum += seg_frames.row(r).cast<double>();
  }
  return (sum / static_cast<double>(seg_frames.rows())).cast<float>();
}

MatrixF PooledVowelMatrix(const std::vector<VowelSegment>& segments) {
  if (segments.empty()) return MatrixF();
  const int dim = segments.front().utterance->features.dim();
  MatrixF pooled(segments.size(), dim);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    pooled.row(i) = MeanPoolSegment(segments[i].frames());
  }
  return pooled;
}

MatrixF StackFrames(const SplitView& view) {
  MatrixF stacked(view.num_frames(), view.feature_dim());
  Eigen::Index row = 0;
  for (const Utterance* u : view.utterances()) {
    stacked.middleRows(row, u->features.num_frames()) = u->features.frames;
    row += u->features.num_frames();
  }
  return stacked;
}

std::array<std::atomic<uint64_t>, 3> SplitAudit::counters_{};

void SplitAudit::RecordTrainingAccess(Split split) {
  counters_[static_cast<int>(split)].fetch_add(1);
}

uint64_t SplitAudit::TrainingAccesses(Split split) {
  return counters_[static_cast<int>(split)].load();
}

void SplitAudit::Reset() {
  for (auto& c : counters_) c.store(0);
}

}  // namespace dsu
