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

#ifndef DSU_EXPERIMENT_H_
#define DSU_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsu/corpus.h"
#include "dsu/kmeans.h"
#include "dsu/neural_vq.h"
#include "dsu/probes.h"
#include "dsu/quantisers.h"

namespace dsu {

enum class RepresentationKind {
  kLatent,
  kClassic,
  kVq,
  kRvq,
  kMeanPooled,
  kSvc,
  kResidualFrame,
  kResidualSegmental,
};

// One row of the comparison: a family plus its per-level codebook sizes
// (empty for the continuous baseline).
struct RepresentationSpec {
  RepresentationKind kind = RepresentationKind::kLatent;
  std::vector<int> levels;

  // Canonical row name, e.g. "rvq-125x4" or "residual-kmeans-segmental-50+450".
  std::string name() const;
  // "500", "250x2", "50+450" or "-" for the baseline.
  std::string levels_label() const;
  int budget() const;
};

// Accepts canonical names and the short forms latent, classic, vq, rvq2,
// rvq4, mean-pooled, svc, residual-frame and residual-segmental, which take
// their sizes from budget. kInvalidArgument on anything else.
RepresentationSpec ParseRepresentation(const std::string& text, int budget);
std::vector<std::string> ShortRepresentationNames();
// The nine rows: latent baseline plus eight quantisers at a shared budget.
std::vector<RepresentationSpec> DefaultRepresentations(int budget = 500);

struct ExperimentSpec {
  std::vector<RepresentationSpec> representations = DefaultRepresentations();
  ProbeConfig frame_probe;    // recurrent, for frame granularity
  ProbeConfig segment_probe;  // logistic, for segment granularity
  KMeansConfig kmeans;        // k and seed are set per fit
  CodecConfig codec;          // sizes and input_dim are set per row
  std::vector<int> sweep_grid{50, 100, 200, 500, 1000};
  std::vector<int> residual_grid{10, 25, 50, 100};
  int residual_budget = 500;
  uint64_t seed = 42;
  // Representations evaluated concurrently; 0 = DefaultWorkerCount().
  int workers = 0;

  ExperimentSpec() { segment_probe.kind = ProbeKind::kLogistic; }
};

void ValidateExperimentSpec(const ExperimentSpec& spec);
nlohmann::json ExperimentSpecToJson(const ExperimentSpec& spec);
// FNV-1a 64 of the compact JSON dump, as 16 hex digits.
std::string SpecHash(const nlohmann::json& canonical);
// "# dsu-tone <version> seed=<seed> spec_hash=<hash>"
std::string ProvenanceLine(uint64_t seed, const std::string& spec_hash);

// ---------------------------------------------------------------------------

// Sorted vocabularies of vowel phone labels and non-null tone labels over
// every split.
ProbeLabels BuildLabels(const Corpus& corpus);

// One item per vowel segment of the split. Frame granularity yields the
// segment's rows of probe vectors, segment granularity the segment's row.
// level 0 uses the full probe vectors, level l >= 1 LevelProbeVectors.
ProbeSet BuildProbeSet(const SplitView& view, const Quantiser& quantiser,
                       const ProbeLabels& labels, int level = 0);

// Mean squared error per dimension between probe vectors and the latent
// frames they stand for, over every aligned frame of the split.
double ReconstructionError(const SplitView& view, const Quantiser& quantiser);

struct FittedRepresentation {
  std::unique_ptr<Quantiser> quantiser;
  std::vector<CodecEpochLog> codec_log;  // neural rows only
};

// Fits on the training split (the codec also reads validation).
FittedRepresentation FitRepresentation(const RepresentationSpec& rep,
                                       const Corpus& corpus,
                                       const ExperimentSpec& spec,
                                       uint64_t seed);

// Seed for a representation row: derived from the spec seed and the row
// name, so adding rows never shifts the others.
uint64_t RepresentationSeed(uint64_t spec_seed, const std::string& name);

// ---------------------------------------------------------------------------

struct ResultRow {
  std::string representation;
  std::string levels;
  std::string probe;
  double phone_f1 = 0.0;
  double tone_f1 = 0.0;
  double val_recon_mse = 0.0;
  int eval_segments = 0;
  double fit_time_s = 0.0;
  double probe_time_s = 0.0;
};

struct ResultTable {
  std::vector<ResultRow> rows;
};

// kInsufficientData unless the corpus has all three splits. Errors from a
// row are rethrown with the row name prefixed.
ResultTable RunComparison(const Corpus& corpus, const ExperimentSpec& spec);

struct SweepRow {
  int k = 0;
  std::string variant;  // "frame" or "pooled"
  double phone_f1 = 0.0;
  double tone_f1 = 0.0;
  bool skipped = false;
  std::string reason;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  // Continuous references: recurrent on latent frames, logistic on pooled.
  double frame_baseline_phone = 0.0, frame_baseline_tone = 0.0;
  double pooled_baseline_phone = 0.0, pooled_baseline_tone = 0.0;
};

SweepResult RunCodebookSweep(const Corpus& corpus, const ExperimentSpec& spec);

struct ResidualRow {
  int k_phone = 0;
  int level = 0;
  std::string task;
  double f1 = 0.0;
};

struct ResidualResult {
  std::vector<ResidualRow> rows;
  double baseline_phone = 0.0;  // logistic probe on pooled latents
  double baseline_tone = 0.0;
};

// Segmental residual k-means with k_residual = residual_budget - k_phone at
// each grid point, both levels probed with the logistic probe.
ResidualResult RunResidualAnalysis(const Corpus& corpus,
                                   const ExperimentSpec& spec);

// ---------------------------------------------------------------------------
// CSV output. Every file starts with the provenance line. Timing lives in a
// separate file so that result files are reproducible byte for byte.

void WriteComparisonCsv(std::ostream& out, const ResultTable& table,
                        const std::string& provenance);
void WriteTimingCsv(std::ostream& out, const ResultTable& table,
                    const std::string& provenance);
void WriteSweepCsv(std::ostream& out, const SweepResult& sweep,
                   const std::string& provenance);
// One row per (k, variant, task): "k,variant,task,f1".
void WriteSweepLongCsv(std::ostream& out, const SweepResult& sweep,
                       const std::string& provenance);
void WriteResidualCsv(std::ostream& out, const ResidualResult& result,
                      const std::string& provenance);

// ---------------------------------------------------------------------------
// Fitted representations on disk: model.json plus DSUC or DSUN files.

void SaveRepresentation(const Quantiser& quantiser,
                        const std::filesystem::path& dir);
std::unique_ptr<Quantiser> LoadRepresentation(const std::filesystem::path& dir);

}  // namespace dsu

#endif  // DSU_EXPERIMENT_H_
