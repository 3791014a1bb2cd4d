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

#include "dsu/experiment.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "dsu/error.h"
#include "dsu/parallel.h"
#include "dsu/random.h"
#include "dsu/version.h"

namespace dsu {

namespace {

constexpr std::size_t kUtteranceChunk = 16;

struct KindInfo {
  RepresentationKind kind;
  const char* prefix;      // canonical name stem
  const char* short_name;  // CLI alias
};

constexpr KindInfo kKinds[] = {
    {RepresentationKind::kLatent, "latent", "latent"},
    {RepresentationKind::kClassic, "classic-kmeans", "classic"},
    {RepresentationKind::kVq, "vq", "vq"},
    {RepresentationKind::kRvq, "rvq", "rvq"},
    {RepresentationKind::kMeanPooled, "mean-pooled-kmeans", "mean-pooled"},
    {RepresentationKind::kSvc, "svc", "svc"},
    {RepresentationKind::kResidualFrame, "residual-kmeans-frame", "residual-frame"},
    {RepresentationKind::kResidualSegmental, "residual-kmeans-segmental",
     "residual-segmental"},
};

const KindInfo& Info(RepresentationKind kind) {
  for (const KindInfo& k : kKinds) {
    if (k.kind == kind) return k;
  }
  Fail(ErrorKind::kInvalidArgument, "unknown representation kind");
}

bool IsResidual(RepresentationKind k) {
  return k == RepresentationKind::kResidualFrame ||
         k == RepresentationKind::kResidualSegmental;
}

std::vector<int> ParseSizes(const std::string& text, char sep) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos ||
        part.size() > 9) {
      return {};
    }
    out.push_back(std::stoi(part));
  }
  return out;
}

std::vector<int> Repeat(int value, int times) {
  return std::vector<int>(times, value);
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since)
      .count();
}

std::string Fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

uint64_t Fnv1a(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ProbeConfig ProbeFor(const ExperimentSpec& spec, Granularity g, uint64_t seed) {
  ProbeConfig c = g == Granularity::kFrame ? spec.frame_probe : spec.segment_probe;
  c.seed = seed;
  return c;
}

std::string Annotate(const std::string& row, const std::exception& e) {
  return row + ": " + e.what();
}

}  // namespace

// ---------------------------------------------------------------------------

std::string RepresentationSpec::name() const {
  const std::string stem = Info(kind).prefix;
  if (kind == RepresentationKind::kLatent) return stem;
  return stem + "-" + levels_label();
}

std::string RepresentationSpec::levels_label() const {
  if (levels.empty()) return "-";
  if (IsResidual(kind)) {
    std::string s;
    for (std::size_t i = 0; i < levels.size(); ++i) {
      s += (i ? "+" : "") + std::to_string(levels[i]);
    }
    return s;
  }
  if (levels.size() == 1) return std::to_string(levels[0]);
  const bool uniform = std::all_of(levels.begin(), levels.end(),
                                   [&](int v) { return v == levels[0]; });
  if (uniform) return std::to_string(levels[0]) + "x" + std::to_string(levels.size());
  std::string s;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    s += (i ? "," : "") + std::to_string(levels[i]);
  }
  return s;
}

int RepresentationSpec::budget() const {
  int b = 0;
  for (int v : levels) b += v;
  return b;
}

std::vector<std::string> ShortRepresentationNames() {
  return {"latent",      "classic", "vq",  "rvq2",           "rvq4",
          "mean-pooled", "svc",     "residual-frame", "residual-segmental"};
}

RepresentationSpec ParseRepresentation(const std::string& text, int budget) {
  if (budget < 1) Fail(ErrorKind::kInvalidArgument, "budget must be >= 1");
  auto bad = [&]() -> RepresentationSpec {
    Fail(ErrorKind::kInvalidArgument, "unknown representation '" + text + "'");
  };
  using K = RepresentationKind;
  RepresentationSpec r;
  const int k_phone = std::min(50, std::max(1, budget / 10));
  if (text == "latent") return r;
  if (text == "classic") return {K::kClassic, {budget}};
  if (text == "vq") return {K::kVq, {budget}};
  if (text == "rvq2") return {K::kRvq, Repeat(std::max(1, budget / 2), 2)};
  if (text == "rvq4") return {K::kRvq, Repeat(std::max(1, budget / 4), 4)};
  if (text == "mean-pooled") return {K::kMeanPooled, {budget}};
  if (text == "svc") return {K::kSvc, Repeat(std::max(1, budget / 2), 2)};
  if (text == "residual-frame" || text == "residual-segmental") {
    if (budget < 2) bad();
    return {text == "residual-frame" ? K::kResidualFrame : K::kResidualSegmental,
            {k_phone, budget - k_phone}};
  }
  // Canonical names: longest matching stem first.
  const KindInfo* match = nullptr;
  for (const KindInfo& k : kKinds) {
    const std::string stem = std::string(k.prefix) + "-";
    if (text.rfind(stem, 0) == 0 &&
        (match == nullptr || stem.size() > std::string(match->prefix).size() + 1)) {
      match = &k;
    }
  }
  if (match == nullptr || match->kind == K::kLatent) bad();
  const std::string tail = text.substr(std::string(match->prefix).size() + 1);
  r.kind = match->kind;
  if (IsResidual(r.kind)) {
    r.levels = ParseSizes(tail, '+');
    if (r.levels.size() != 2) bad();
  } else if (const auto x = tail.find('x'); x != std::string::npos) {
    const std::vector<int> k = ParseSizes(tail.substr(0, x), ',');
    const std::vector<int> n = ParseSizes(tail.substr(x + 1), ',');
    if (k.size() != 1 || n.size() != 1 || n[0] < 1 || n[0] > 64) bad();
    r.levels = Repeat(k[0], n[0]);
  } else {
    r.levels = ParseSizes(tail, ',');
  }
  if (r.levels.empty()) bad();
  for (int v : r.levels) {
    if (v < 1) bad();
  }
  const std::size_t n = r.levels.size();
  const bool single = r.kind == K::kClassic || r.kind == K::kVq ||
                      r.kind == K::kMeanPooled;
  if ((single && n != 1) || (r.kind == K::kSvc && n != 2)) bad();
  return r;
}

std::vector<RepresentationSpec> DefaultRepresentations(int budget) {
  std::vector<RepresentationSpec> out;
  for (const std::string& s : ShortRepresentationNames()) {
    out.push_back(ParseRepresentation(s, budget));
  }
  return out;
}

void ValidateExperimentSpec(const ExperimentSpec& spec) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) Fail(ErrorKind::kInvalidArgument, "experiment: " + msg);
  };
  require(!spec.representations.empty(), "no representations");
  std::set<std::string> names;
  for (const auto& r : spec.representations) {
    require(names.insert(r.name()).second, "duplicate representation " + r.name());
    for (int v : r.levels) require(v >= 1, "budgets must be positive");
  }
  require(std::any_of(spec.representations.begin(), spec.representations.end(),
                      [](const RepresentationSpec& r) {
                        return r.kind == RepresentationKind::kLatent;
                      }),
          "the continuous latent baseline must be included");
  require(!spec.sweep_grid.empty(), "sweep grid is empty");
  require(std::is_sorted(spec.sweep_grid.begin(), spec.sweep_grid.end()),
          "sweep grid must be sorted ascending");
  for (int k : spec.sweep_grid) require(k >= 1, "sweep grid values must be >= 1");
  require(!spec.residual_grid.empty(), "residual grid is empty");
  require(std::is_sorted(spec.residual_grid.begin(), spec.residual_grid.end()),
          "residual grid must be sorted ascending");
  for (int k : spec.residual_grid) require(k >= 1, "residual grid values must be >= 1");
  ValidateProbeConfig(spec.frame_probe);
  ValidateProbeConfig(spec.segment_probe);
  require(spec.frame_probe.kind == ProbeKind::kRecurrent,
          "frame probe must be recurrent");
  require(spec.segment_probe.kind == ProbeKind::kLogistic,
          "segment probe must be logistic");
}

nlohmann::json ExperimentSpecToJson(const ExperimentSpec& s) {
  auto probe = [](const ProbeConfig& p) {
    return nlohmann::json{{"kind", ProbeKindName(p.kind)},
                          {"hidden_size", p.hidden_size},
                          {"dropout", p.dropout},
                          {"learning_rate", p.resolved_learning_rate()},
                          {"batch_size", p.batch_size},
                          {"max_epochs", p.resolved_max_epochs()},
                          {"patience", p.resolved_patience()},
                          {"whiten", p.whiten}};
  };
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : s.representations) reps.push_back(r.name());
  return nlohmann::json{
      {"representations", reps},
      {"frame_probe", probe(s.frame_probe)},
      {"segment_probe", probe(s.segment_probe)},
      {"kmeans",
       {{"max_iters", s.kmeans.max_iters},
        {"rel_tol", s.kmeans.rel_tol},
        {"num_init_candidates", s.kmeans.num_init_candidates}}},
      {"codec",
       {{"hidden_dim", s.codec.hidden_dim},
        {"code_dim", s.codec.code_dim},
        {"commitment_weight", s.codec.commitment_weight},
        {"ema_decay", s.codec.ema_decay},
        {"learning_rate", s.codec.learning_rate},
        {"batch_size", s.codec.batch_size},
        {"max_epochs", s.codec.max_epochs},
        {"patience", s.codec.patience},
        {"dead_code_threshold", s.codec.dead_code_threshold},
        {"warm_start_iters", s.codec.warm_start_iters},
        {"probe_decoded", s.codec.probe_decoded}}},
      {"sweep_grid", s.sweep_grid},
      {"residual_grid", s.residual_grid},
      {"residual_budget", s.residual_budget},
      {"seed", s.seed}};
}

std::string SpecHash(const nlohmann::json& canonical) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(Fnv1a(canonical.dump())));
  return buf;
}

std::string ProvenanceLine(uint64_t seed, const std::string& spec_hash) {
  return std::string("# dsu-tone ") + kVersion + " seed=" + std::to_string(seed) +
         " spec_hash=" + spec_hash;
}

// ---------------------------------------------------------------------------

ProbeLabels BuildLabels(const Corpus& corpus) {
  std::set<std::string> phones, tones;
  for (const Utterance& u : corpus.utterances) {
    for (const PhoneSegment& s : u.segments) {
      if (!s.is_vowel) continue;
      phones.insert(s.phone_label);
      if (s.has_tone()) tones.insert(s.tone_label);
    }
  }
  return {{phones.begin(), phones.end()}, {tones.begin(), tones.end()}};
}

ProbeSet BuildProbeSet(const SplitView& view, const Quantiser& quantiser,
                       const ProbeLabels& labels, int level) {
  const auto& utts = view.utterances();
  const bool frame = quantiser.granularity() == Granularity::kFrame;
  std::vector<ProbeSet> parts(NumChunks(utts.size(), kUtteranceChunk));
  ParallelForChunks(
      utts.size(), kUtteranceChunk, DefaultWorkerCount(),
      [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        for (std::size_t u = begin; u < end; ++u) {
          const Utterance& utt = *utts[u];
          const QuantisedSequence q = quantiser.Quantise(utt);
          const MatrixF vectors =
              level == 0 ? q.probe_vectors : quantiser.LevelProbeVectors(q, level);
          for (std::size_t s = 0; s < utt.segments.size(); ++s) {
            const PhoneSegment& seg = utt.segments[s];
            if (!seg.is_vowel) continue;
            MatrixF input = frame ? MatrixF(vectors.middleRows(seg.start_frame,
                                                               seg.length()))
                                  : MatrixF(vectors.row(s));
            const int tone =
                seg.has_tone() ? LabelIndex(labels.tones, seg.tone_label) : -1;
            parts[chunk].Add(std::move(input),
                             LabelIndex(labels.phones, seg.phone_label), tone);
          }
        }
      });
  ProbeSet out;
  out.source_split = static_cast<int>(view.split());
  for (ProbeSet& p : parts) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      out.Add(std::move(p.inputs[i]), p.phone[i], p.tone[i]);
    }
  }
  return out;
}

double ReconstructionError(const SplitView& view, const Quantiser& quantiser) {
  const auto& utts = view.utterances();
  const bool frame = quantiser.granularity() == Granularity::kFrame;
  const std::size_t chunks = NumChunks(utts.size(), kUtteranceChunk);
  std::vector<double> sums(chunks, 0.0);
  std::vector<double> counts(chunks, 0.0);
  ParallelForChunks(
      utts.size(), kUtteranceChunk, DefaultWorkerCount(),
      [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        for (std::size_t u = begin; u < end; ++u) {
          const Utterance& utt = *utts[u];
          const QuantisedSequence q = quantiser.Quantise(utt);
          const MatrixF& x = utt.features.frames;
          for (std::size_t s = 0; s < utt.segments.size(); ++s) {
            const PhoneSegment& seg = utt.segments[s];
            for (int t = seg.start_frame; t < seg.end_frame; ++t) {
              const auto approx =
                  frame ? q.probe_vectors.row(t) : q.probe_vectors.row(s);
              sums[chunk] += SquaredDistance(x.row(t), approx);
              counts[chunk] += static_cast<double>(x.cols());
            }
          }
        }
      });
  double sum = 0.0, count = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    sum += sums[c];
    count += counts[c];
  }
  return count > 0 ? sum / count : 0.0;
}

uint64_t RepresentationSeed(uint64_t spec_seed, const std::string& name) {
  return DeriveSeed(spec_seed, Fnv1a(name));
}

FittedRepresentation FitRepresentation(const RepresentationSpec& rep,
                                       const Corpus& corpus,
                                       const ExperimentSpec& spec,
                                       uint64_t seed) {
  const SplitView train(corpus, Split::kTrain);
  KMeansConfig base = spec.kmeans;
  base.seed = seed;
  FittedRepresentation out;
  using K = RepresentationKind;
  switch (rep.kind) {
    case K::kLatent:
      out.quantiser = std::make_unique<LatentFrames>();
      break;
    case K::kClassic:
      out.quantiser =
          std::make_unique<ClassicKMeans>(FitClassic(train, rep.levels[0], base));
      break;
    case K::kMeanPooled:
      out.quantiser = std::make_unique<MeanPooledKMeans>(
          FitMeanPooled(train, rep.levels[0], base));
      break;
    case K::kSvc:
      out.quantiser = std::make_unique<Svc>(
          FitSvc(train, rep.levels[0], rep.levels[1], base));
      break;
    case K::kResidualFrame:
    case K::kResidualSegmental: {
      ResidualOptions opt;
      opt.k_phone = rep.levels[0];
      opt.k_residual = rep.levels[1];
      opt.variant = rep.kind == K::kResidualFrame ? ResidualVariant::kFrame
                                                  : ResidualVariant::kSegmental;
      out.quantiser =
          std::make_unique<ResidualKMeans>(FitResidual(train, opt, base));
      break;
    }
    case K::kVq:
    case K::kRvq: {
      CodecConfig cfg = spec.codec;
      cfg.input_dim = corpus.feature_dim;
      cfg.codes_per_level = rep.levels;
      cfg.seed = seed;
      const SplitView val(corpus, Split::kValidation);
      CodecTrainResult r = TrainCodec(train, val, cfg);
      out.codec_log = std::move(r.log);
      out.quantiser = std::make_unique<NeuralVq>(std::move(r.params), cfg);
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void RequireSplits(const Corpus& corpus) {
  if (!HasAllSplits(corpus)) {
    Fail(ErrorKind::kInsufficientData,
         "corpus needs train, validation and test utterances");
  }
}

// Runs fn(i) for i in [0, n) on the spec's workers, rethrowing the first
// failure with its row name.
void ForEachRow(std::size_t n, int workers,
                const std::function<std::string(std::size_t)>& name,
                const std::function<void(std::size_t)>& fn) {
  ParallelForChunks(n, 1, workers > 0 ? workers : DefaultWorkerCount(),
                    [&](std::size_t, std::size_t begin, std::size_t) {
                      try {
                        fn(begin);
                      } catch (const Error& e) {
                        throw Error(e.kind(), Annotate(name(begin), e));
                      } catch (const std::exception& e) {
                        throw Error(ErrorKind::kInvalidArgument,
                                    Annotate(name(begin), e));
                      }
                    });
}

struct ProbeScores {
  double phone = 0.0;
  double tone = 0.0;
  int segments = 0;
};

ProbeScores ProbeQuantiser(const Corpus& corpus, const Quantiser& q,
                           const ProbeLabels& labels, const ProbeConfig& config,
                           int level = 0) {
  const SplitView train(corpus, Split::kTrain);
  const SplitView val(corpus, Split::kValidation);
  const SplitView test(corpus, Split::kTest);
  const ProbeSet tr = BuildProbeSet(train, q, labels, level);
  const ProbeSet va = BuildProbeSet(val, q, labels, level);
  const ProbeSet te = BuildProbeSet(test, q, labels, level);
  const ProbeOutcome o = RunProbe(tr, va, te, labels, config, q.name());
  return {o.phone.weighted_f1, o.tone.weighted_f1, o.tone.num_eval_segments};
}

}  // namespace

ResultTable RunComparison(const Corpus& corpus, const ExperimentSpec& spec) {
  ValidateExperimentSpec(spec);
  RequireSplits(corpus);
  const ProbeLabels labels = BuildLabels(corpus);
  ResultTable table;
  table.rows.resize(spec.representations.size());
  ForEachRow(
      spec.representations.size(), spec.workers,
      [&](std::size_t i) { return spec.representations[i].name(); },
      [&](std::size_t i) {
        const RepresentationSpec& rep = spec.representations[i];
        const uint64_t seed = RepresentationSeed(spec.seed, rep.name());
        const auto t0 = std::chrono::steady_clock::now();
        const FittedRepresentation fit =
            FitRepresentation(rep, corpus, spec, DeriveSeed(seed, 0));
        ResultRow& row = table.rows[i];
        row.fit_time_s = Seconds(t0);
        const auto t1 = std::chrono::steady_clock::now();
        const Quantiser& q = *fit.quantiser;
        const ProbeConfig probe = ProbeFor(spec, q.granularity(), DeriveSeed(seed, 1));
        const ProbeScores s = ProbeQuantiser(corpus, q, labels, probe);
        row.representation = rep.name();
        row.levels = rep.levels_label();
        row.probe = std::string(ProbeKindName(probe.kind));
        row.phone_f1 = s.phone;
        row.tone_f1 = s.tone;
        row.eval_segments = s.segments;
        row.val_recon_mse =
            ReconstructionError(SplitView(corpus, Split::kValidation), q);
        row.probe_time_s = Seconds(t1);
      });
  return table;
}

SweepResult RunCodebookSweep(const Corpus& corpus, const ExperimentSpec& spec) {
  ValidateExperimentSpec(spec);
  RequireSplits(corpus);
  const ProbeLabels labels = BuildLabels(corpus);
  const SplitView train(corpus, Split::kTrain);
  std::size_t train_frames = 0;
  for (const Utterance* u : train.utterances()) {
    for (const PhoneSegment& s : u->segments) train_frames += s.length();
  }
  const std::size_t train_vowels = ExtractVowelSegments(train).size();

  SweepResult result;
  struct Job {
    int k;
    bool pooled;
  };
  std::vector<Job> jobs;
  for (int k : spec.sweep_grid) {
    jobs.push_back({k, false});
    jobs.push_back({k, true});
  }
  result.rows.resize(jobs.size() + 2);
  ForEachRow(
      jobs.size() + 2, spec.workers,
      [&](std::size_t i) {
        if (i >= jobs.size()) return std::string("baseline");
        return std::string(jobs[i].pooled ? "pooled" : "frame") + " k=" +
               std::to_string(jobs[i].k);
      },
      [&](std::size_t i) {
        SweepRow& row = result.rows[i];
        if (i >= jobs.size()) {
          const bool pooled = i == jobs.size() + 1;
          const std::string name = pooled ? "latent-pooled" : "latent";
          const uint64_t seed = RepresentationSeed(spec.seed, "sweep-" + name);
          std::unique_ptr<Quantiser> q;
          if (pooled) {
            q = std::make_unique<LatentPooled>();
          } else {
            q = std::make_unique<LatentFrames>();
          }
          const ProbeScores s = ProbeQuantiser(
              corpus, *q, labels, ProbeFor(spec, q->granularity(), seed));
          row.variant = name;
          row.phone_f1 = s.phone;
          row.tone_f1 = s.tone;
          return;
        }
        const Job& job = jobs[i];
        row.k = job.k;
        row.variant = job.pooled ? "pooled" : "frame";
        const std::size_t items = job.pooled ? train_vowels : train_frames;
        if (static_cast<std::size_t>(job.k) > items) {
          row.skipped = true;
          row.reason = "k exceeds " + std::to_string(items) + " training items";
          return;
        }
        const RepresentationSpec rep{
            job.pooled ? RepresentationKind::kMeanPooled : RepresentationKind::kClassic,
            {job.k}};
        const uint64_t seed = RepresentationSeed(spec.seed, "sweep-" + rep.name());
        const FittedRepresentation fit =
            FitRepresentation(rep, corpus, spec, DeriveSeed(seed, 0));
        const ProbeScores s =
            ProbeQuantiser(corpus, *fit.quantiser, labels,
                           ProbeFor(spec, fit.quantiser->granularity(),
                                    DeriveSeed(seed, 1)));
        row.phone_f1 = s.phone;
        row.tone_f1 = s.tone;
      });
  const SweepRow pooled = result.rows.back();
  result.rows.pop_back();
  const SweepRow frame = result.rows.back();
  result.rows.pop_back();
  result.frame_baseline_phone = frame.phone_f1;
  result.frame_baseline_tone = frame.tone_f1;
  result.pooled_baseline_phone = pooled.phone_f1;
  result.pooled_baseline_tone = pooled.tone_f1;
  return result;
}

ResidualResult RunResidualAnalysis(const Corpus& corpus,
                                   const ExperimentSpec& spec) {
  ValidateExperimentSpec(spec);
  if (spec.residual_grid.back() >= spec.residual_budget) {
    Fail(ErrorKind::kInvalidArgument,
         "residual grid values must be below the budget of " +
             std::to_string(spec.residual_budget));
  }
  RequireSplits(corpus);
  const ProbeLabels labels = BuildLabels(corpus);
  const std::size_t n = spec.residual_grid.size();
  ResidualResult result;
  std::vector<std::array<ResidualRow, 4>> blocks(n);
  ProbeScores baseline;
  ForEachRow(
      n + 1, spec.workers,
      [&](std::size_t i) {
        return i < n ? "residual k_phone=" + std::to_string(spec.residual_grid[i])
                     : std::string("baseline");
      },
      [&](std::size_t i) {
        if (i == n) {
          const LatentPooled q;
          baseline = ProbeQuantiser(
              corpus, q, labels,
              ProbeFor(spec, q.granularity(),
                       RepresentationSeed(spec.seed, "residual-baseline")));
          return;
        }
        const int kp = spec.residual_grid[i];
        const RepresentationSpec rep{RepresentationKind::kResidualSegmental,
                                     {kp, spec.residual_budget - kp}};
        const uint64_t seed = RepresentationSeed(spec.seed, "residual-" + rep.name());
        const FittedRepresentation fit =
            FitRepresentation(rep, corpus, spec, DeriveSeed(seed, 0));
        for (int level = 1; level <= 2; ++level) {
          const ProbeScores s = ProbeQuantiser(
              corpus, *fit.quantiser, labels,
              ProbeFor(spec, Granularity::kSegment, DeriveSeed(seed, level)), level);
          blocks[i][(level - 1) * 2] = {kp, level, "phone", s.phone};
          blocks[i][(level - 1) * 2 + 1] = {kp, level, "tone", s.tone};
        }
      });
  for (const auto& b : blocks) result.rows.insert(result.rows.end(), b.begin(), b.end());
  result.baseline_phone = baseline.phone;
  result.baseline_tone = baseline.tone;
  return result;
}

// ---------------------------------------------------------------------------

void WriteComparisonCsv(std::ostream& out, const ResultTable& table,
                        const std::string& provenance) {
  out << provenance << '\n'
      << "representation,levels,probe,phone_f1,tone_f1,val_recon_mse,eval_segments\n";
  for (const ResultRow& r : table.rows) {
    out << r.representation << ',' << r.levels << ',' << r.probe << ','
        << Fixed(r.phone_f1) << ',' << Fixed(r.tone_f1) << ','
        << Fixed(r.val_recon_mse) << ',' << r.eval_segments << '\n';
  }
}

void WriteTimingCsv(std::ostream& out, const ResultTable& table,
                    const std::string& provenance) {
  out << provenance << '\n' << "representation,fit_time_s,probe_time_s\n";
  char buf[64];
  for (const ResultRow& r : table.rows) {
    std::snprintf(buf, sizeof(buf), "%.3f,%.3f", r.fit_time_s, r.probe_time_s);
    out << r.representation << ',' << buf << '\n';
  }
}

void WriteSweepCsv(std::ostream& out, const SweepResult& s,
                   const std::string& provenance) {
  out << provenance << '\n'
      << "# baseline latent phone_f1=" << Fixed(s.frame_baseline_phone)
      << " tone_f1=" << Fixed(s.frame_baseline_tone) << '\n'
      << "# baseline latent-pooled phone_f1=" << Fixed(s.pooled_baseline_phone)
      << " tone_f1=" << Fixed(s.pooled_baseline_tone) << '\n'
      << "k,variant,phone_f1,tone_f1,status\n";
  for (const SweepRow& r : s.rows) {
    out << r.k << ',' << r.variant << ',';
    if (r.skipped) {
      out << ",,skipped: " << r.reason << '\n';
    } else {
      out << Fixed(r.phone_f1) << ',' << Fixed(r.tone_f1) << ",ok\n";
    }
  }
}

void WriteSweepLongCsv(std::ostream& out, const SweepResult& s,
                       const std::string& provenance) {
  out << provenance << '\n' << "k,variant,task,f1\n";
  for (const SweepRow& r : s.rows) {
    if (r.skipped) continue;
    out << r.k << ',' << r.variant << ",phone," << Fixed(r.phone_f1) << '\n';
    out << r.k << ',' << r.variant << ",tone," << Fixed(r.tone_f1) << '\n';
  }
}

void WriteResidualCsv(std::ostream& out, const ResidualResult& r,
                      const std::string& provenance) {
  out << provenance << '\n'
      << "# baseline latent-pooled phone_f1=" << Fixed(r.baseline_phone)
      << " tone_f1=" << Fixed(r.baseline_tone) << '\n'
      << "k_phone,level,task,f1\n";
  for (const ResidualRow& row : r.rows) {
    out << row.k_phone << ",L" << row.level << ',' << row.task << ','
        << Fixed(row.f1) << '\n';
  }
}

// ---------------------------------------------------------------------------

void SaveRepresentation(const Quantiser& q, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) Fail(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json meta{{"name", q.name()}, {"version", kVersion}};
  if (dynamic_cast<const LatentFrames*>(&q) != nullptr) {
    meta["kind"] = "latent";
  } else if (dynamic_cast<const LatentPooled*>(&q) != nullptr) {
    meta["kind"] = "latent-pooled";
  } else if (const auto* c = dynamic_cast<const ClassicKMeans*>(&q)) {
    meta["kind"] = "classic";
    SaveCodebook(c->codebook(), dir / "level1.dsuc");
  } else if (const auto* m = dynamic_cast<const MeanPooledKMeans*>(&q)) {
    meta["kind"] = "mean-pooled";
    SaveCodebook(m->codebook(), dir / "level1.dsuc");
  } else if (const auto* s = dynamic_cast<const Svc*>(&q)) {
    meta["kind"] = "svc";
    SaveCodebook(s->codebooks().frame, dir / "level1.dsuc");
    SaveCodebook(s->codebooks().segment, dir / "level2.dsuc");
  } else if (const auto* r = dynamic_cast<const ResidualKMeans*>(&q)) {
    meta["kind"] = r->codebooks().variant == ResidualVariant::kFrame
                       ? "residual-frame"
                       : "residual-segmental";
    SaveCodebook(r->codebooks().phone, dir / "level1.dsuc");
    SaveCodebook(r->codebooks().residual, dir / "level2.dsuc");
  } else if (const auto* v = dynamic_cast<const NeuralVq*>(&q)) {
    meta["kind"] = "codec";
    SaveCodecCheckpoint(v->params(), v->config(), dir / "codec.dsun");
  } else {
    Fail(ErrorKind::kInvalidArgument, "cannot save representation " + q.name());
  }
  std::ofstream out(dir / "model.json");
  out << meta.dump(2) << '\n';
  if (!out) Fail(ErrorKind::kIo, "cannot write " + (dir / "model.json").string());
}

std::unique_ptr<Quantiser> LoadRepresentation(const std::filesystem::path& dir) {
  const std::filesystem::path meta_path = dir / "model.json";
  std::ifstream in(meta_path);
  if (!in) Fail(ErrorKind::kIo, "cannot open " + meta_path.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const std::exception& e) {
    Fail(ErrorKind::kFormat, meta_path.string() + ": " + e.what());
  }
  const std::string kind = meta.value("kind", "");
  if (kind == "latent") return std::make_unique<LatentFrames>();
  if (kind == "latent-pooled") return std::make_unique<LatentPooled>();
  if (kind == "classic") {
    return std::make_unique<ClassicKMeans>(LoadCodebook(dir / "level1.dsuc"));
  }
  if (kind == "mean-pooled") {
    return std::make_unique<MeanPooledKMeans>(LoadCodebook(dir / "level1.dsuc"));
  }
  if (kind == "svc") {
    return std::make_unique<Svc>(SvcCodebooks{LoadCodebook(dir / "level1.dsuc"),
                                              LoadCodebook(dir / "level2.dsuc")});
  }
  if (kind == "residual-frame" || kind == "residual-segmental") {
    ResidualCodebooks cb{LoadCodebook(dir / "level1.dsuc"),
                         LoadCodebook(dir / "level2.dsuc"),
                         kind == "residual-frame" ? ResidualVariant::kFrame
                                                  : ResidualVariant::kSegmental};
    return std::make_unique<ResidualKMeans>(std::move(cb));
  }
  if (kind == "codec") {
    CodecParams p;
    CodecConfig c;
    LoadCodecCheckpoint(dir / "codec.dsun", &p, &c);
    return std::make_unique<NeuralVq>(std::move(p), std::move(c));
  }
  Fail(ErrorKind::kFormat, meta_path.string() + ": unknown kind '" + kind + "'");
}

}  // namespace dsu
