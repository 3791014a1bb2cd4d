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

#include "cli.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsu/corpus.h"
#include "dsu/error.h"
#include "dsu/experiment.h"
#include "dsu/feature_io.h"
#include "dsu/probes.h"
#include "dsu/quantisers.h"
#include "dsu/random.h"
#include "dsu/synthetic.h"
#include "dsu/version.h"

namespace dsu::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  uint64_t seed = 42;
  std::string manifest;
  std::string out;
  bool verbose = false;
};

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo:
    case ErrorKind::kFormat:
    case ErrorKind::kTruncated:
    case ErrorKind::kNonFinite:
    case ErrorKind::kOverlap:
    case ErrorKind::kRange:
      return kExitIo;
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kDimensionMismatch:
      return kExitUsage;
    case ErrorKind::kDivergence:
      return kExitDivergence;
    default:
      return kExitFailure;
  }
}

void Require(bool ok, const std::string& msg) {
  if (!ok) throw UsageError(msg);
}

std::vector<int> ParseGrid(const std::string& text) {
  std::vector<int> grid;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    Require(!part.empty() && part.size() <= 9 &&
                part.find_first_not_of("0123456789") == std::string::npos,
            "malformed grid '" + text + "'");
    grid.push_back(std::stoi(part));
    Require(grid.back() >= 1, "grid values must be >= 1");
  }
  Require(!grid.empty(), "grid is empty");
  Require(std::is_sorted(grid.begin(), grid.end()) &&
              std::adjacent_find(grid.begin(), grid.end()) == grid.end(),
          "grid must be strictly ascending");
  return grid;
}

fs::path OutDir(const Globals& g) {
  Require(!g.out.empty(), "--out is required");
  std::error_code ec;
  fs::create_directories(g.out, ec);
  if (ec) Fail(ErrorKind::kIo, "cannot create " + g.out + ": " + ec.message());
  return g.out;
}

Corpus LoadCorpusFrom(const Globals& g) {
  Require(!g.manifest.empty(), "--manifest is required");
  return LoadCorpus(LoadManifest(g.manifest));
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) Fail(ErrorKind::kIo, "cannot write " + path.string());
  f << text;
  if (!f) Fail(ErrorKind::kIo, "write failed for " + path.string());
}

std::string ReadText(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) Fail(ErrorKind::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json Provenance(uint64_t seed, const std::string& hash) {
  return json{{"tool", "dsu-tone"}, {"version", kVersion}, {"seed", seed},
              {"spec_hash", hash}};
}

// ---------------------------------------------------------------------------
// CSV reading for the report command.

struct CsvTable {
  std::string source;
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

CsvTable ParseCsv(const std::string& text, const std::string& source) {
  CsvTable t;
  t.source = source;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      t.comments.push_back(line);
      continue;
    }
    std::vector<std::string> cells = SplitCsvLine(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    Require(cells.size() == t.header.size(),
            source + ":" + std::to_string(lineno) + ": expected " +
                std::to_string(t.header.size()) + " fields, got " +
                std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  Require(!t.header.empty(), source + ": no header line");
  return t;
}

int Column(const CsvTable& t, const std::string& name) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  return it == t.header.end() ? -1 : static_cast<int>(it - t.header.begin());
}

double ParseNumber(const std::string& cell, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    Require(used == cell.size(), where + ": not a number '" + cell + "'");
    return v;
  } catch (const std::logic_error&) {
    throw UsageError(where + ": not a number '" + cell + "'");
  }
}

std::string KindOf(const CsvTable& t) {
  auto starts = [&](std::vector<std::string> prefix) {
    return t.header.size() >= prefix.size() &&
           std::equal(prefix.begin(), prefix.end(), t.header.begin());
  };
  if (starts({"representation", "levels", "probe", "phone_f1", "tone_f1"})) {
    return "comparison";
  }
  if (starts({"representation", "fit_time_s"})) return "timing";
  if (starts({"k", "variant", "phone_f1", "tone_f1"})) return "sweep";
  if (starts({"k", "variant", "task", "f1"})) return "sweep-long";
  if (starts({"k_phone", "level", "task", "f1"})) return "residual";
  return "table";
}

// Rows whose tone F1 reaches the second highest value. Ties at the cut keep
// every tied row.
std::vector<bool> TopTwoTone(const CsvTable& t) {
  const int col = Column(t, "tone_f1");
  std::vector<double> v;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    v.push_back(ParseNumber(t.rows[r][col], t.source + " row " + std::to_string(r + 1)));
  }
  std::vector<double> sorted = v;
  std::sort(sorted.rbegin(), sorted.rend());
  const double cut = sorted.size() >= 2 ? sorted[1] : (sorted.empty() ? 0.0 : sorted[0]);
  std::vector<bool> bold(v.size());
  for (std::size_t r = 0; r < v.size(); ++r) bold[r] = v[r] >= cut;
  return bold;
}

std::string MarkdownTable(const CsvTable& t, const std::vector<bool>& bold_tone) {
  std::string s = "|";
  for (const auto& h : t.header) s += " " + h + " |";
  s += "\n|";
  for (std::size_t i = 0; i < t.header.size(); ++i) s += "---|";
  s += "\n";
  const int tone_col = Column(t, "tone_f1");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    s += "|";
    for (std::size_t c = 0; c < t.rows[r].size(); ++c) {
      const bool b = !bold_tone.empty() && bold_tone[r] &&
                     static_cast<int>(c) == tone_col;
      s += " " + (b ? "**" + t.rows[r][c] + "**" : t.rows[r][c]) + " |";
    }
    s += "\n";
  }
  return s;
}

std::string RenderMarkdown(const std::vector<CsvTable>& tables) {
  std::string s = "# dsu-tone report\n";
  for (const CsvTable& t : tables) {
    const std::string kind = KindOf(t);
    s += "\n## " + kind + " (" + fs::path(t.source).filename().string() + ")\n\n";
    for (const auto& c : t.comments) s += "`" + c.substr(std::min<std::size_t>(2, c.size())) + "`\n\n";
    std::vector<bool> bold;
    if (kind == "comparison") {
      bold = TopTwoTone(t);
      s += "Bold: top-2 tone F1.\n\n";
    }
    s += MarkdownTable(t, bold);
  }
  return s;
}

// ---------------------------------------------------------------------------

struct ExperimentFlags {
  int budget = 500;
  int workers = 0;
  int probe_epochs = 0;
  int codec_epochs = 0;
  int kmeans_iters = 0;
};

void AddExperimentFlags(CLI::App* cmd, ExperimentFlags* f) {
  cmd->add_option("--budget", f->budget, "total codes per representation")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--workers", f->workers,
                  "representations evaluated at once (0 = DSU_QUANT_THREADS)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--probe-epochs", f->probe_epochs,
                  "cap on probe epochs (0 = default)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--codec-epochs", f->codec_epochs,
                  "cap on codec epochs (0 = default)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--kmeans-iters", f->kmeans_iters,
                  "cap on Lloyd iterations (0 = default)")
      ->check(CLI::NonNegativeNumber);
}

ExperimentSpec MakeSpec(const Globals& g, const ExperimentFlags& f) {
  ExperimentSpec spec;
  spec.seed = g.seed;
  spec.workers = f.workers;
  spec.representations = DefaultRepresentations(f.budget);
  spec.residual_budget = f.budget;
  if (f.probe_epochs > 0) {
    spec.frame_probe.max_epochs = f.probe_epochs;
    spec.segment_probe.max_epochs = f.probe_epochs;
  }
  if (f.codec_epochs > 0) spec.codec.max_epochs = f.codec_epochs;
  if (f.kmeans_iters > 0) spec.kmeans.max_iters = f.kmeans_iters;
  return spec;
}

void Log(const Globals& g, std::ostream& err, const std::string& msg) {
  if (g.verbose) err << msg << '\n';
}

// ---------------------------------------------------------------------------
// Subcommands.

struct SynthFlags {
  std::string spec_path;
  int num_phones = 0, num_tones = 0, dim = 0, vowel_phones = -1;
  int train = 0, val = 0, test = 0;
  double noise = -1, tone_scale = -1, phone_spread = -1, gain = -1;
};

int CmdSynth(const Globals& g, const SynthFlags& f, bool seed_given,
             std::ostream& out, std::ostream& err) {
  SyntheticSpec spec;
  if (!f.spec_path.empty()) {
    try {
      spec = json::parse(ReadText(f.spec_path)).get<SyntheticSpec>();
    } catch (const json::exception& e) {
      throw UsageError(f.spec_path + ": " + e.what());
    }
  }
  if (seed_given || f.spec_path.empty()) spec.seed = g.seed;
  if (f.num_phones > 0) spec.num_phones = f.num_phones;
  if (f.num_tones > 0) spec.num_tones = f.num_tones;
  if (f.dim > 0) spec.dim = f.dim;
  if (f.vowel_phones >= 0) spec.vowel_phones = f.vowel_phones;
  if (f.train > 0) spec.num_utterances[0] = f.train;
  if (f.val > 0) spec.num_utterances[1] = f.val;
  if (f.test > 0) spec.num_utterances[2] = f.test;
  if (f.noise >= 0) spec.noise_scale = f.noise;
  if (f.tone_scale >= 0) spec.tone_scale = f.tone_scale;
  if (f.phone_spread >= 0) spec.phone_spread = f.phone_spread;
  if (f.gain >= 0) spec.template_gain = f.gain;
  ValidateSyntheticSpec(spec);
  if (spec.num_tones == 1) {
    err << "warning: --num-tones 1 makes tone probing degenerate\n";
  }
  const fs::path dir = OutDir(g);
  SyntheticGroundTruth truth;
  const fs::path manifest = GenerateSyntheticCorpus(spec, dir, &truth);
  const json spec_json = spec;
  const std::string hash = SpecHash(spec_json);
  json meta = Provenance(spec.seed, hash);
  meta["spec"] = spec_json;
  WriteText(dir / "synth.json", meta.dump(2) + "\n");

  out << "manifest " << manifest.string() << "\n"
      << "seed " << spec.seed << " spec_hash " << hash << "\n";
  const char* names[3] = {"train", "validation", "test"};
  for (int s = 0; s < 3; ++s) {
    out << names[s] << ": " << spec.num_utterances[s] << " utterances, "
        << truth.segments[s] << " segments, " << truth.vowel_segments[s]
        << " vowel segments\n  tones:";
    for (const auto& [label, n] : truth.tone_counts[s]) out << ' ' << label << '=' << n;
    int lo = 1 << 30, hi = 0;
    for (const auto& [label, n] : truth.phone_counts[s]) {
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    out << "\n  vowel phones: " << truth.phone_counts[s].size()
        << " classes, " << (truth.phone_counts[s].empty() ? 0 : lo) << ".." << hi
        << " segments each\n";
  }
  return kExitOk;
}

int CmdFit(const Globals& g, const std::string& representation, int budget,
           const ExperimentFlags& xf, std::ostream& out, std::ostream& err) {
  const RepresentationSpec rep = ParseRepresentation(representation, budget);
  const Corpus corpus = LoadCorpusFrom(g);
  const fs::path dir = OutDir(g);
  ExperimentSpec spec = MakeSpec(g, xf);
  spec.representations = {rep};
  const uint64_t seed = RepresentationSeed(g.seed, rep.name());
  Log(g, err, "fitting " + rep.name());
  const FittedRepresentation fit =
      FitRepresentation(rep, corpus, spec, DeriveSeed(seed, 0));
  SaveRepresentation(*fit.quantiser, dir);
  json spec_json = ExperimentSpecToJson(spec);
  const std::string hash = SpecHash(spec_json);
  json meta = Provenance(g.seed, hash);
  meta["representation"] = rep.name();
  meta["manifest"] = g.manifest;
  if (!fit.codec_log.empty()) {
    json log = json::array();
    for (const CodecEpochLog& e : fit.codec_log) {
      log.push_back({{"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"validation_mse", e.validation_mse},
                     {"dead_codes_reseeded", e.dead_codes_reseeded}});
    }
    meta["codec_log"] = log;
  }
  WriteText(dir / "fit.json", meta.dump(2) + "\n");
  out << "fitted " << rep.name() << " -> " << dir.string() << "\nseed " << g.seed
      << " spec_hash " << hash << "\n";
  return kExitOk;
}

int CmdQuantise(const Globals& g, const std::string& model,
                const std::string& split, std::ostream& out) {
  Require(!model.empty(), "--model is required");
  const std::unique_ptr<Quantiser> q = LoadRepresentation(model);
  const Corpus corpus = LoadCorpusFrom(g);
  std::vector<QuantisedSequence> seqs;
  const std::optional<Split> only =
      split == "all" ? std::nullopt : std::optional<Split>(ParseSplit(split));
  for (const Utterance& u : corpus.utterances) {
    if (!only || u.split == *only) seqs.push_back(q->Quantise(u));
  }
  const std::string hash =
      SpecHash(json{{"model", q->name()}, {"split", split}, {"seed", g.seed}});
  std::ostringstream tsv;
  tsv << ProvenanceLine(g.seed, hash) << '\n';
  WriteQuantisedTsv(tsv, seqs);
  if (g.out.empty() || g.out == "-") {
    out << tsv.str();
  } else {
    WriteText(g.out, tsv.str());
    out << "wrote " << seqs.size() << " sequences to " << g.out << "\n";
  }
  return kExitOk;
}

int CmdProbe(const Globals& g, const std::string& model,
             const std::string& representation, const std::string& kind,
             int level, int epochs, std::ostream& out, std::ostream& err) {
  Require(model.empty() != representation.empty(),
          "give exactly one of --model and --representation");
  std::unique_ptr<Quantiser> q;
  if (!model.empty()) {
    q = LoadRepresentation(model);
  } else if (representation == "latent") {
    q = std::make_unique<LatentFrames>();
  } else if (representation == "latent-pooled") {
    q = std::make_unique<LatentPooled>();
  } else {
    throw UsageError("--representation must be latent or latent-pooled");
  }
  const Corpus corpus = LoadCorpusFrom(g);
  if (!HasAllSplits(corpus)) {
    Fail(ErrorKind::kInsufficientData, "probing needs train, validation and test");
  }
  ExperimentSpec spec;
  ProbeConfig config = q->granularity() == Granularity::kFrame ? spec.frame_probe
                                                               : spec.segment_probe;
  if (kind == "recurrent") config.kind = ProbeKind::kRecurrent;
  if (kind == "logistic") config.kind = ProbeKind::kLogistic;
  Require(kind == "auto" || kind == "recurrent" || kind == "logistic",
          "--probe must be auto, recurrent or logistic");
  Require(!(config.kind == ProbeKind::kLogistic &&
            q->granularity() == Granularity::kFrame),
          "the logistic probe needs a segment-granularity representation");
  if (epochs > 0) config.max_epochs = epochs;
  config.seed = DeriveSeed(RepresentationSeed(g.seed, q->name()), 1);
  const ProbeLabels labels = BuildLabels(corpus);
  const ProbeSet tr = BuildProbeSet(SplitView(corpus, Split::kTrain), *q, labels, level);
  const ProbeSet va =
      BuildProbeSet(SplitView(corpus, Split::kValidation), *q, labels, level);
  const ProbeSet te = BuildProbeSet(SplitView(corpus, Split::kTest), *q, labels, level);
  const ProbeOutcome o = RunProbe(tr, va, te, labels, config, q->name());
  for (const ProbeTrainLog* lg : {&o.phone_log, &o.tone_log}) {
    for (std::size_t e = 0; e < lg->validation_f1.size(); ++e) {
      char line[96];
      std::snprintf(line, sizeof(line), "%s epoch %zu loss %.4f val_f1 %.4f",
                    lg == &o.phone_log ? "phone" : "tone", e + 1,
                    lg->train_loss[e], lg->validation_f1[e]);
      Log(g, err, line);
    }
  }
  const std::string hash = SpecHash(json{{"representation", q->name()},
                                         {"probe", ProbeKindName(config.kind)},
                                         {"level", level},
                                         {"max_epochs", config.resolved_max_epochs()},
                                         {"seed", g.seed}});
  const fs::path dir = OutDir(g);
  for (const ProbeReport* r : {&o.phone, &o.tone}) {
    json j = json::parse(ReportToJson(*r));
    j["provenance"] = Provenance(g.seed, hash);
    WriteText(dir / ("probe_" + r->task + ".json"), j.dump(2) + "\n");
  }
  std::ostringstream csv;
  csv << ProvenanceLine(g.seed, hash) << '\n';
  WriteReportCsv(csv, {o.phone, o.tone});
  WriteText(dir / "probe_per_class.csv", csv.str());
  char buf[96];
  std::snprintf(buf, sizeof(buf), "phone_f1 %.6f\ntone_f1 %.6f\n",
                o.phone.weighted_f1, o.tone.weighted_f1);
  out << q->name() << " (" << ProbeKindName(config.kind) << ")\n" << buf
      << "seed " << g.seed << " spec_hash " << hash << "\n";
  return kExitOk;
}

int CmdCompare(const Globals& g, const ExperimentFlags& xf,
               const std::string& quantisers, std::ostream& out,
               std::ostream& err) {
  ExperimentSpec spec = MakeSpec(g, xf);
  if (!quantisers.empty() && quantisers != "all") {
    spec.representations = {RepresentationSpec{}};
    std::stringstream ss(quantisers);
    std::string name;
    while (std::getline(ss, name, ',')) {
      const RepresentationSpec r = ParseRepresentation(name, xf.budget);
      if (r.kind == RepresentationKind::kLatent) continue;
      spec.representations.push_back(r);
    }
  }
  ValidateExperimentSpec(spec);
  const Corpus corpus = LoadCorpusFrom(g);
  const fs::path dir = OutDir(g);
  const std::string hash = SpecHash(ExperimentSpecToJson(spec));
  const std::string prov = ProvenanceLine(g.seed, hash);
  Log(g, err, "comparing " + std::to_string(spec.representations.size()) +
                  " representations");
  const ResultTable table = RunComparison(corpus, spec);
  std::ostringstream csv, timing;
  WriteComparisonCsv(csv, table, prov);
  WriteTimingCsv(timing, table, prov);
  WriteText(dir / "comparison.csv", csv.str());
  WriteText(dir / "timing.csv", timing.str());
  WriteText(dir / "report.md",
            RenderMarkdown({ParseCsv(csv.str(), (dir / "comparison.csv").string())}));
  out << csv.str();
  return kExitOk;
}

int CmdSweep(const Globals& g, const ExperimentFlags& xf, const std::string& grid,
             std::ostream& out) {
  ExperimentSpec spec = MakeSpec(g, xf);
  spec.sweep_grid = ParseGrid(grid);
  ValidateExperimentSpec(spec);
  const Corpus corpus = LoadCorpusFrom(g);
  const fs::path dir = OutDir(g);
  const std::string prov = ProvenanceLine(g.seed, SpecHash(ExperimentSpecToJson(spec)));
  const SweepResult r = RunCodebookSweep(corpus, spec);
  std::ostringstream csv, longf;
  WriteSweepCsv(csv, r, prov);
  WriteSweepLongCsv(longf, r, prov);
  WriteText(dir / "sweep.csv", csv.str());
  WriteText(dir / "sweep_long.csv", longf.str());
  out << csv.str();
  return kExitOk;
}

int CmdResidual(const Globals& g, const ExperimentFlags& xf,
                const std::string& grid, std::ostream& out) {
  ExperimentSpec spec = MakeSpec(g, xf);
  spec.residual_grid = ParseGrid(grid);
  ValidateExperimentSpec(spec);
  const Corpus corpus = LoadCorpusFrom(g);
  const fs::path dir = OutDir(g);
  const std::string prov = ProvenanceLine(g.seed, SpecHash(ExperimentSpecToJson(spec)));
  const ResidualResult r = RunResidualAnalysis(corpus, spec);
  std::ostringstream csv;
  WriteResidualCsv(csv, r, prov);
  WriteText(dir / "residual.csv", csv.str());
  out << csv.str();
  return kExitOk;
}

int CmdReport(const Globals& g, const std::vector<std::string>& inputs,
              const std::string& format, std::ostream& out) {
  Require(!inputs.empty(), "--inputs needs at least one CSV file");
  std::vector<CsvTable> tables;
  std::vector<std::string> texts;
  for (const std::string& in : inputs) {
    texts.push_back(ReadText(in));
    tables.push_back(ParseCsv(texts.back(), in));
  }
  std::string rendered;
  if (format == "md") {
    rendered = RenderMarkdown(tables);
  } else if (texts.size() == 1) {
    rendered = texts[0];
  } else {
    for (std::size_t i = 0; i < texts.size(); ++i) {
      rendered += "# source " + fs::path(inputs[i]).filename().string() + "\n";
      rendered += texts[i];
      if (!rendered.empty() && rendered.back() != '\n') rendered += '\n';
    }
  }
  if (g.out.empty() || g.out == "-") {
    out << rendered;
  } else {
    WriteText(g.out, rendered);
  }
  return kExitOk;
}

}  // namespace

int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Discrete speech unit tone-retention toolkit", "dsu_tone"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  CLI::Option* seed_opt =
      app.add_option("--seed", g.seed, "random seed (echoed in all outputs)")
          ->capture_default_str();
  app.add_option("--manifest", g.manifest, "corpus manifest.json");
  app.add_option("--out", g.out, "output directory or file");
  app.add_flag("--verbose", g.verbose, "progress messages on stderr");

  SynthFlags sf;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--spec", sf.spec_path, "generator spec as JSON");
  synth->add_option("--num-phones", sf.num_phones)->check(CLI::PositiveNumber);
  synth->add_option("--num-tones", sf.num_tones)->check(CLI::PositiveNumber);
  synth->add_option("--dim", sf.dim)->check(CLI::PositiveNumber);
  synth->add_option("--vowel-phones", sf.vowel_phones)->check(CLI::NonNegativeNumber);
  synth->add_option("--train-utterances", sf.train)->check(CLI::PositiveNumber);
  synth->add_option("--val-utterances", sf.val)->check(CLI::PositiveNumber);
  synth->add_option("--test-utterances", sf.test)->check(CLI::PositiveNumber);
  synth->add_option("--noise-scale", sf.noise)->check(CLI::NonNegativeNumber);
  synth->add_option("--tone-scale", sf.tone_scale)->check(CLI::NonNegativeNumber);
  synth->add_option("--phone-spread", sf.phone_spread)->check(CLI::PositiveNumber);
  synth->add_option("--template-gain", sf.gain)->check(CLI::NonNegativeNumber);

  ExperimentFlags fit_flags;
  std::string fit_rep;
  CLI::App* fit = app.add_subcommand("fit", "fit one representation");
  fit->add_option("--representation", fit_rep, "e.g. classic, rvq4, svc-250x2")
      ->required();
  AddExperimentFlags(fit, &fit_flags);

  std::string q_model, q_split = "all";
  CLI::App* quantise = app.add_subcommand("quantise", "write unit sequences");
  quantise->add_option("--model", q_model, "directory written by fit")->required();
  quantise->add_option("--split", q_split, "train, validation, test or all");

  std::string p_model, p_rep, p_kind = "auto";
  int p_level = 0, p_epochs = 0;
  CLI::App* probe = app.add_subcommand("probe", "probe one representation");
  probe->add_option("--model", p_model, "directory written by fit");
  probe->add_option("--representation", p_rep, "latent or latent-pooled");
  probe->add_option("--probe", p_kind, "auto, recurrent or logistic");
  probe->add_option("--level", p_level, "probe the first N levels (0 = all)")
      ->check(CLI::NonNegativeNumber);
  probe->add_option("--probe-epochs", p_epochs)->check(CLI::NonNegativeNumber);

  ExperimentFlags cmp_flags;
  std::string cmp_quantisers = "all";
  CLI::App* compare = app.add_subcommand("compare", "quantiser comparison table");
  compare->add_option("--quantisers", cmp_quantisers,
                      "comma separated list or 'all'; latent is always included");
  AddExperimentFlags(compare, &cmp_flags);

  ExperimentFlags sw_flags;
  std::string sw_grid = "50,100,200,500,1000";
  CLI::App* sweep = app.add_subcommand("sweep", "classic k-means codebook sweep");
  sweep->add_option("--grid", sw_grid, "ascending K values")->capture_default_str();
  AddExperimentFlags(sweep, &sw_flags);

  ExperimentFlags res_flags;
  std::string res_grid = "10,25,50,100";
  CLI::App* residual = app.add_subcommand("residual", "L1/L2 residual analysis");
  residual->add_option("--grid", res_grid, "ascending K_phone values")
      ->capture_default_str();
  AddExperimentFlags(residual, &res_flags);

  std::vector<std::string> rep_inputs;
  std::string rep_format = "md";
  CLI::App* report = app.add_subcommand("report", "merge result CSVs");
  report->add_option("--inputs", rep_inputs, "CSV files")->required();
  report->add_option("--format", rep_format)
      ->check(CLI::IsMember({"md", "csv"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return CmdSynth(g, sf, seed_opt->count() > 0, out, err);
    if (*fit) return CmdFit(g, fit_rep, fit_flags.budget, fit_flags, out, err);
    if (*quantise) return CmdQuantise(g, q_model, q_split, out);
    if (*probe) return CmdProbe(g, p_model, p_rep, p_kind, p_level, p_epochs, out, err);
    if (*compare) return CmdCompare(g, cmp_flags, cmp_quantisers, out, err);
    if (*sweep) return CmdSweep(g, sw_flags, sw_grid, out);
    if (*residual) return CmdResidual(g, res_flags, res_grid, out);
    if (*report) return CmdReport(g, rep_inputs, rep_format, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error (" << ErrorKindName(e.kind()) << "): " << e.what() << '\n';
    return ExitCodeFor(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace dsu::cli
