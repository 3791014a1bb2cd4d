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

#include <set>
#include <sstream>

#include <doctest.h>

#include "dsu/error.h"
#include "dsu/experiment.h"
#include "dsu/synthetic.h"
#include "test_util.h"

namespace dsu {
namespace {

const SyntheticCorpus& Small() {
  static const SyntheticCorpus corpus = GenerateSyntheticInMemory(testing::SmallSpec());
  return corpus;
}

ExperimentSpec FastSpec(std::vector<std::string> reps, int budget = 24) {
  ExperimentSpec spec;
  spec.representations.clear();
  for (const auto& r : reps) spec.representations.push_back(ParseRepresentation(r, budget));
  spec.frame_probe.hidden_size = 16;
  spec.frame_probe.max_epochs = 4;
  spec.frame_probe.patience = 2;
  spec.segment_probe.max_epochs = 20;
  spec.kmeans.max_iters = 20;
  spec.codec.max_epochs = 2;
  spec.codec.hidden_dim = 32;
  spec.workers = 1;
  spec.seed = 11;
  return spec;
}

std::string ComparisonCsv(const ResultTable& t) {
  std::ostringstream out;
  WriteComparisonCsv(out, t, "# p");
  return out.str();
}

TEST_SUITE("experiment") {

TEST_CASE("representation names parse to canonical rows") {
  CHECK(ParseRepresentation("latent", 500).name() == "latent");
  CHECK(ParseRepresentation("classic", 500).name() == "classic-kmeans-500");
  CHECK(ParseRepresentation("rvq2", 500).name() == "rvq-250x2");
  CHECK(ParseRepresentation("rvq4", 500).name() == "rvq-125x4");
  CHECK(ParseRepresentation("svc", 500).levels_label() == "250x2");
  CHECK(ParseRepresentation("residual-segmental", 500).name() ==
        "residual-kmeans-segmental-50+450");
  CHECK(ParseRepresentation("residual-frame", 100).levels_label() == "10+90");
  CHECK(ParseRepresentation("mean-pooled-kmeans-64", 500).budget() == 64);
  CHECK(ParseRepresentation("rvq-8x3", 500).levels == std::vector<int>{8, 8, 8});
  CHECK(ParseRepresentation("residual-kmeans-frame-5+7", 500).name() ==
        "residual-kmeans-frame-5+7");
  for (const char* bad : {"kmeans", "classic-kmeans-0", "svc-3", "rvq-5x0", "latent-1", ""}) {
    CHECK_THROWS_AS(ParseRepresentation(bad, 500), Error);
  }
  for (const std::string& s : ShortRepresentationNames()) {
    const RepresentationSpec r = ParseRepresentation(s, 500);
    CHECK(ParseRepresentation(r.name(), 7).name() == r.name());
  }
}

TEST_CASE("default representations share the budget") {
  const auto reps = DefaultRepresentations(500);
  CHECK(reps.size() == 9);
  CHECK(reps[0].kind == RepresentationKind::kLatent);
  for (std::size_t i = 1; i < reps.size(); ++i) CHECK(reps[i].budget() == 500);
}

TEST_CASE("spec validation") {
  ExperimentSpec spec;
  CHECK_NOTHROW(ValidateExperimentSpec(spec));
  spec.sweep_grid = {100, 50};
  CHECK_THROWS_AS(ValidateExperimentSpec(spec), Error);
  spec = ExperimentSpec{};
  spec.representations.erase(spec.representations.begin());
  CHECK_THROWS_AS(ValidateExperimentSpec(spec), Error);
  spec = ExperimentSpec{};
  spec.representations.push_back(spec.representations[1]);
  CHECK_THROWS_AS(ValidateExperimentSpec(spec), Error);
  spec = ExperimentSpec{};
  spec.residual_grid = {10, 0};
  CHECK_THROWS_AS(ValidateExperimentSpec(spec), Error);
}

TEST_CASE("spec hash is a stable 16-digit content hash") {
  ExperimentSpec a, b;
  const std::string ha = SpecHash(ExperimentSpecToJson(a));
  CHECK(ha.size() == 16);
  CHECK(ha.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(SpecHash(ExperimentSpecToJson(b)) == ha);
  b.seed = 43;
  CHECK(SpecHash(ExperimentSpecToJson(b)) != ha);
  CHECK(ProvenanceLine(42, ha) == "# dsu-tone 0.1.0 seed=42 spec_hash=" + ha);
  CHECK(RepresentationSeed(42, "a") != RepresentationSeed(42, "b"));
  CHECK(RepresentationSeed(42, "a") == RepresentationSeed(42, "a"));
}

TEST_CASE("labels and probe sets cover vowel segments only") {
  const Corpus& c = Small().corpus;
  const ProbeLabels labels = BuildLabels(c);
  CHECK(labels.phones.size() == 8);
  CHECK(labels.tones == std::vector<std::string>{"T1", "T2", "T3", "T4"});
  const SplitView test(c, Split::kTest);
  const ProbeSet frames = BuildProbeSet(test, LatentFrames(), labels);
  const ProbeSet pooled = BuildProbeSet(test, LatentPooled(), labels);
  CHECK(frames.size() == ExtractVowelSegments(test).size());
  CHECK(pooled.size() == frames.size());
  CHECK(frames.source_split == static_cast<int>(Split::kTest));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(pooled.inputs[i].rows() == 1);
    CHECK(frames.phone[i] >= 0);
    CHECK(frames.tone[i] >= 0);
    CHECK(pooled.inputs[i].row(0).isApprox(MeanPoolSegment(frames.inputs[i])));
  }
}

TEST_CASE("comparison rows follow the spec and reruns are identical") {
  const ExperimentSpec spec =
      FastSpec({"latent", "classic", "mean-pooled", "residual-segmental", "svc", "rvq2"});
  SplitAudit::Reset();
  const ResultTable a = RunComparison(Small().corpus, spec);
  CHECK(SplitAudit::TrainingAccesses(Split::kTest) == 0);
  REQUIRE(a.rows.size() == spec.representations.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].representation == spec.representations[i].name());
    CHECK(a.rows[i].phone_f1 >= 0.0);
    CHECK(a.rows[i].tone_f1 <= 1.0);
    CHECK(a.rows[i].eval_segments > 0);
  }
  CHECK(a.rows[0].probe == "recurrent");
  CHECK(a.rows[2].probe == "logistic");
  CHECK(a.rows[0].val_recon_mse == 0.0);
  CHECK(a.rows[1].val_recon_mse > 0.0);
  ExperimentSpec parallel = spec;
  parallel.workers = 3;
  const ResultTable b = RunComparison(Small().corpus, parallel);
  CHECK(ComparisonCsv(a) == ComparisonCsv(b));
  const std::string csv = ComparisonCsv(a);
  CHECK(csv.rfind("# p\nrepresentation,levels,probe,phone_f1,tone_f1,val_recon_mse,eval_segments\n", 0) == 0);
  std::ostringstream timing;
  WriteTimingCsv(timing, a, "# p");
  CHECK(timing.str().find("representation,fit_time_s,probe_time_s\n") != std::string::npos);
}

TEST_CASE("only the baseline gives a one-row table") {
  const ResultTable t = RunComparison(Small().corpus, FastSpec({"latent"}));
  CHECK(t.rows.size() == 1);
}

TEST_CASE("sweep marks oversize codebooks as skipped") {
  ExperimentSpec spec = FastSpec({"latent"});
  spec.sweep_grid = {6, 100000};
  const SweepResult s = RunCodebookSweep(Small().corpus, spec);
  REQUIRE(s.rows.size() == 4);
  int skipped = 0;
  for (const SweepRow& r : s.rows) {
    if (r.k == 100000) {
      CHECK(r.skipped);
      CHECK_FALSE(r.reason.empty());
      ++skipped;
    } else {
      CHECK_FALSE(r.skipped);
    }
  }
  CHECK(skipped == 2);
  std::ostringstream out, longform;
  WriteSweepCsv(out, s, "# p");
  WriteSweepLongCsv(longform, s, "# p");
  CHECK(out.str().find("k,variant,phone_f1,tone_f1,status\n") != std::string::npos);
  CHECK(out.str().find("skipped") != std::string::npos);
  CHECK(longform.str().find("k,variant,task,f1\n") != std::string::npos);
}

TEST_CASE("residual analysis has one row per grid point, level and task") {
  ExperimentSpec spec = FastSpec({"latent"});
  spec.residual_grid = {4, 8};
  spec.residual_budget = 24;
  const ResidualResult r = RunResidualAnalysis(Small().corpus, spec);
  CHECK(r.rows.size() == 2 * 2 * 2);
  for (const ResidualRow& row : r.rows) {
    if (row.k_phone == 8 && row.level == 1 && row.task == "phone") CHECK(row.f1 >= 0.9);
  }
  std::ostringstream out;
  WriteResidualCsv(out, r, "# p");
  std::istringstream lines(out.str());
  std::string line;
  int data = 0;
  while (std::getline(lines, line)) data += !line.empty() && line[0] != '#';
  CHECK(data == 1 + 8);
  spec.residual_grid = {4, 24};
  CHECK_THROWS_AS(RunResidualAnalysis(Small().corpus, spec), Error);
}

TEST_CASE("saved representations quantise identically after loading") {
  testing::TempDir dir("rep");
  const ExperimentSpec spec = FastSpec({"latent"});
  const Utterance& u = Small().corpus.utterances.back();
  for (const char* name : {"classic", "mean-pooled", "svc", "residual-frame",
                           "residual-segmental", "vq", "rvq4"}) {
    const RepresentationSpec rep = ParseRepresentation(name, 24);
    const FittedRepresentation fit = FitRepresentation(rep, Small().corpus, spec, 3);
    const auto sub = dir / name;
    SaveRepresentation(*fit.quantiser, sub);
    const std::unique_ptr<Quantiser> back = LoadRepresentation(sub);
    CHECK(back->name() == fit.quantiser->name());
    const QuantisedSequence a = fit.quantiser->Quantise(u), b = back->Quantise(u);
    CHECK(a.codes == b.codes);
    CHECK(a.probe_vectors == b.probe_vectors);
  }
  CHECK_THROWS_AS(LoadRepresentation(dir / "missing"), Error);
}

TEST_CASE("reconstruction error is zero for the latent baseline") {
  const SplitView val(Small().corpus, Split::kValidation);
  CHECK(ReconstructionError(val, LatentFrames()) == 0.0);
}

}  // TEST_SUITE

}  // namespace
}  // namespace dsu
