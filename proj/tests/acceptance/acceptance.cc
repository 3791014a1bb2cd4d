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

// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. Runs the full experiments on the
// default synthetic corpus, so expect tens of minutes on one core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdarg>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "cli.h"
#include "dsu/corpus.h"
#include "dsu/experiment.h"
#include "dsu/feature_io.h"
#include "dsu/kmeans.h"
#include "dsu/neural_vq.h"
#include "dsu/probes.h"
#include "dsu/quantisers.h"
#include "dsu/random.h"
#include "dsu/synthetic.h"

namespace fs = std::filesystem;

namespace dsu {
namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

struct Verdict {
  std::string id;
  bool pass = false;
  std::string detail;
};

std::vector<Verdict> g_verdicts;
// Criteria recorded as failing on this generator; they still print FAIL but
// only change the exit status if they start passing.
std::vector<std::string> g_known_failures;

bool KnownFailure(const std::string& id) {
  return std::find(g_known_failures.begin(), g_known_failures.end(), id) !=
         g_known_failures.end();
}

void Report(const std::string& id, bool pass, const std::string& detail) {
  g_verdicts.push_back({id, pass, detail});
  const char* note = "";
  if (KnownFailure(id)) note = pass ? " [listed as known failure but passed]" : " [known failure]";
  std::printf("%s %s %s%s\n", id.c_str(), pass ? "PASS" : "FAIL", detail.c_str(), note);
  std::fflush(stdout);
}

std::string Fmt(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
std::string Fmt(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

int RunCli(std::vector<std::string> args) {
  args.insert(args.begin(), "dsu_tone");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  const int code = cli::Run(static_cast<int>(argv.size()), argv.data(), out, std::cerr);
  return code;
}

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Data rows of a CSV with '#' comment lines dropped, keyed by header name.
std::vector<std::map<std::string, std::string>> ReadCsv(const fs::path& p) {
  std::istringstream in(ReadFile(p));
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (header.empty()) {
      header = cells;
      continue;
    }
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(row);
  }
  return rows;
}

const std::map<std::string, std::string>* FindRow(
    const std::vector<std::map<std::string, std::string>>& rows, const std::string& key,
    const std::string& value) {
  for (const auto& r : rows) {
    auto it = r.find(key);
    if (it != r.end() && it->second == value) return &r;
  }
  return nullptr;
}

double Num(const std::map<std::string, std::string>* row, const std::string& key) {
  if (row == nullptr) return std::nan("");
  auto it = row->find(key);
  return it == row->end() ? std::nan("") : std::stod(it->second);
}

MatrixF RandomMatrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  MatrixF m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(scale * rng.Normal());
  return m;
}

double RelErr(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7});
}

// Largest relative error between an analytic gradient and central differences.
template <typename M>
double WorstGradientError(M* tensor, const M& analytic, const std::function<double()>& loss) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < tensor->size(); ++i) {
    const double saved = tensor->data()[i];
    const double h = 1e-6;
    tensor->data()[i] = saved + h;
    const double up = loss();
    tensor->data()[i] = saved - h;
    const double down = loss();
    tensor->data()[i] = saved;
    const double fd = (up - down) / (2 * h);
    if (std::abs(fd) < 1e-8 && std::abs(analytic.data()[i]) < 1e-8) continue;
    worst = std::max(worst, RelErr(fd, analytic.data()[i]));
  }
  return worst;
}

double OracleWeightedF1(const std::vector<int>& t, const std::vector<int>& p) {
  int c = 0;
  for (std::size_t i = 0; i < t.size(); ++i) c = std::max({c, t[i] + 1, p[i] + 1});
  std::vector<std::vector<int>> conf(c, std::vector<int>(c, 0));
  for (std::size_t i = 0; i < t.size(); ++i) conf[t[i]][p[i]]++;
  double total = 0;
  for (int k = 0; k < c; ++k) {
    int row = 0, col = 0;
    for (int j = 0; j < c; ++j) {
      row += conf[k][j];
      col += conf[j][k];
    }
    if (row == 0) continue;
    const double prec = col == 0 ? 0.0 : static_cast<double>(conf[k][k]) / col;
    const double rec = static_cast<double>(conf[k][k]) / row;
    total += row * (prec + rec == 0 ? 0.0 : 2 * prec * rec / (prec + rec));
  }
  return total / static_cast<double>(t.size());
}

// ---------------------------------------------------------------------------

void CheckInvariants(const Corpus& corpus) {
  const auto start = Clock::now();
  Rng rng(2024);
  std::vector<std::string> failed;

  // Lloyd monotonicity.
  for (int trial = 0; trial < 100; ++trial) {
    const int n = static_cast<int>(rng.UniformInt(20, 400));
    const int d = static_cast<int>(rng.UniformInt(1, 8));
    const int k = static_cast<int>(rng.UniformInt(1, std::min(n, 30)));
    KMeansConfig c;
    c.k = k;
    c.seed = trial;
    c.workers = 1;
    const Codebook cb = FitKMeans(RandomMatrix(rng, n, d), c);
    const auto& tr = cb.stats().inertia_trace;
    for (std::size_t i = 1; i < tr.size(); ++i) {
      if (tr[i] > tr[i - 1]) {
        failed.push_back("lloyd");
        break;
      }
    }
  }

  // Assignment against a linear scan.
  {
    const MatrixF centroids = RandomMatrix(rng, 64, 16);
    const Codebook cb(centroids);
    const MatrixF xs = RandomMatrix(rng, 1000, 16);
    const BatchAssignment batch = cb.AssignBatch(xs);
    int mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
      int best = 0;
      double best_d = INFINITY;
      for (int k = 0; k < 64; ++k) {
        double dist = 0;
        for (int j = 0; j < 16; ++j) {
          const double diff = static_cast<double>(xs(i, j)) - centroids(k, j);
          dist += diff * diff;
        }
        if (dist < best_d) {
          best_d = dist;
          best = k;
        }
      }
      mismatches += cb.Assign(xs.row(i)).first != best || batch.codes[i] != best;
    }
    if (mismatches != 0) failed.push_back("assign");
  }

  // Weighted F1 against the confusion-matrix oracle.
  for (int trial = 0; trial < 500; ++trial) {
    const int c = static_cast<int>(rng.UniformInt(1, 6));
    const int n = static_cast<int>(rng.UniformInt(1, 50));
    std::vector<int> t(n), p(n);
    for (int i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.UniformInt(0, c - 1));
      p[i] = static_cast<int>(rng.UniformInt(0, c - 1));
    }
    if (std::abs(WeightedF1(t, p) - OracleWeightedF1(t, p)) > 1e-12) {
      failed.push_back("weighted-f1");
      break;
    }
  }

  // Logistic gradient.
  double logistic_err = 0;
  for (int trial = 0; trial < 5; ++trial) {
    LogisticParams<double> p{RandomMatrix(rng, 3, 4).cast<double>(),
                             RandomMatrix(rng, 3, 1).col(0).cast<double>()};
    const MatrixD x = RandomMatrix(rng, 5, 4).cast<double>();
    const std::vector<int> y{0, 2, 1, 2, 1};
    const std::vector<double> w{1.5, 0.7, 1.1};
    LogisticParams<double> g;
    LogisticLoss<double>(p, x, y, w, &g);
    auto loss = [&] { return LogisticLoss<double>(p, x, y, w, nullptr); };
    logistic_err = std::max({logistic_err, WorstGradientError(&p.w, g.w, loss),
                             WorstGradientError(&p.b, g.b, loss)});
  }
  if (logistic_err > 1e-4) failed.push_back("logistic-gradient");

  // Recurrent gradient, with a dropout mask and an unlabelled tone.
  double recurrent_err = 0;
  for (int trial = 0; trial < 5; ++trial) {
    RecurrentParams<double> p = InitRecurrent(4, 3, 2, 2, trial).Cast<double>();
    p.b = RandomMatrix(rng, 12, 1, 0.5).col(0).cast<double>();
    const MatrixD a = RandomMatrix(rng, 2, 4).cast<double>();
    const MatrixD b = RandomMatrix(rng, 1, 4).cast<double>();
    const std::vector<const MatrixD*> seqs{&a, &b};
    const std::vector<int> phones{0, 1}, tones{1, -1};
    const std::vector<double> pw{1.2, 0.8}, tw{0.5, 1.5};
    MatrixD mask = MatrixD::Constant(2, 3, 1.0 / 0.7);
    mask(0, 1) = 0.0;
    RecurrentParams<double> g;
    RecurrentLoss<double>(p, seqs, phones, tones, pw, tw, &mask, &g);
    auto loss = [&] {
      return RecurrentLoss<double>(p, seqs, phones, tones, pw, tw, &mask, nullptr);
    };
    recurrent_err = std::max({recurrent_err, WorstGradientError(&p.w_ih, g.w_ih, loss),
                              WorstGradientError(&p.w_hh, g.w_hh, loss),
                              WorstGradientError(&p.b, g.b, loss),
                              WorstGradientError(&p.phone_w, g.phone_w, loss),
                              WorstGradientError(&p.tone_w, g.tone_w, loss),
                              WorstGradientError(&p.tone_b, g.tone_b, loss)});
  }
  if (recurrent_err > 1e-3) failed.push_back("recurrent-gradient");

  // Straight-through Jacobian: decoder directional derivative at z_q along v
  // equals grad_latent . v.
  double st_err = 0;
  for (int trial = 0; trial < 5; ++trial) {
    CodecConfig c;
    c.input_dim = 4;
    c.hidden_dim = 8;
    c.codes_per_level = {6, 3};
    CodecParams pf = InitWeights(c);
    pf.codebooks = {RandomMatrix(rng, 6, 4), RandomMatrix(rng, 3, 4, 0.3)};
    pf.dec_b1 = RandomMatrix(rng, 8, 1, 0.2).col(0);
    const BasicCodecParams<double> p = pf.Cast<double>();
    const MatrixD x = RandomMatrix(rng, 5, 4).cast<double>();
    const ForwardResult<double> r = Forward<double>(p, x, 0.0, true);
    const MatrixD v = RandomMatrix(rng, 5, 4).cast<double>();
    auto decoder_loss = [&](const MatrixD& zq) {
      return (Decode<double>(p, zq) - x).squaredNorm() / static_cast<double>(x.size());
    };
    const double h = 1e-6;
    const double fd =
        (decoder_loss(r.quantised + h * v) - decoder_loss(r.quantised - h * v)) / (2 * h);
    st_err = std::max(st_err, RelErr(fd, (r.grad_latent.array() * v.array()).sum()));
  }
  if (st_err > 1e-4) failed.push_back("straight-through");

  // SVC midpoint and residual-vs-pooled reconstruction on the default corpus.
  const SplitView train(corpus, Split::kTrain);
  const SplitView test(corpus, Split::kTest);
  KMeansConfig base;
  base.seed = 7;
  base.max_iters = 30;
  const Svc svc(FitSvc(train, 250, 250, base));
  double midpoint_err = 0;
  for (const Utterance* u : test.utterances()) {
    const QuantisedSequence q = svc.Quantise(*u);
    for (int i = 0; i < q.num_positions(); ++i) {
      if (q.codes[1][i] == kNoSegmentCode) continue;
      const RowVectorF mid = (svc.codebooks().frame.centroid(q.codes[0][i]) +
                              svc.codebooks().segment.centroid(q.codes[1][i])) *
                             0.5f;
      midpoint_err = std::max<double>(midpoint_err, (q.probe_vectors.row(i) - mid).norm());
    }
  }
  if (midpoint_err != 0.0) failed.push_back("svc-midpoint");

  const MeanPooledKMeans pooled(FitMeanPooled(train, 50, base));
  const ResidualKMeans residual(FitResidual(train, {}, base));
  double pooled_err = 0, residual_err = 0;
  for (const Utterance* u : test.utterances()) {
    const MatrixF target = PooledSegments(*u);
    pooled_err += (pooled.Quantise(*u).probe_vectors - target).squaredNorm();
    residual_err += (residual.Quantise(*u).probe_vectors - target).squaredNorm();
  }
  if (residual_err > pooled_err) failed.push_back("residual-reconstruction");

  const double elapsed = Seconds(start);
  std::string detail = Fmt(
      "logistic grad %.1e (<= 1e-4), recurrent grad %.1e (<= 1e-3), straight-through %.1e "
      "(<= 1e-4), svc midpoint %.1e, residual/pooled SSE %.4g/%.4g, %.1fs (<= 300s)",
      logistic_err, recurrent_err, st_err, midpoint_err, residual_err, pooled_err, elapsed);
  for (const auto& f : failed) detail += " failed:" + f;
  Report("A7", failed.empty() && elapsed <= 300.0, detail);
}

// ---------------------------------------------------------------------------

void CheckRoundTrips(const fs::path& dir) {
  Rng rng(99);
  int dsuf = 0, dsuc = 0, dsun = 0;
  for (int i = 0; i < 100; ++i) {
    const int t = i % 10 == 0 ? 1 : static_cast<int>(rng.UniformInt(1, 40));
    const int d = i % 10 == 1 ? 1 : static_cast<int>(rng.UniformInt(1, 70));
    FeatureSequence s;
    s.utterance_id = "u";
    s.frames = RandomMatrix(rng, t, d, std::pow(10.0, rng.UniformInt(-3, 3)));
    SaveFeatureFile(s, dir / "f.dsuf");
    const FeatureSequence back = LoadFeatureFile(dir / "f.dsuf", "u");
    dsuf += back.frames.rows() == t && back.frames.cols() == d &&
            std::memcmp(back.frames.data(), s.frames.data(), sizeof(float) * t * d) == 0;

    const int k = i % 10 == 2 ? 1 : static_cast<int>(rng.UniformInt(1, 60));
    const Codebook cb(RandomMatrix(rng, k, d), i % 4);
    SaveCodebook(cb, dir / "c.dsuc");
    const Codebook cb2 = LoadCodebook(dir / "c.dsuc");
    dsuc += cb2.size() == k && cb2.dim() == d && cb2.level_id() == i % 4 &&
            std::memcmp(cb2.centroids().data(), cb.centroids().data(), sizeof(float) * k * d) == 0;

    CodecConfig c;
    c.input_dim = d;
    c.hidden_dim = static_cast<int>(rng.UniformInt(1, 12));
    c.code_dim = static_cast<int>(rng.UniformInt(0, 5));
    const int levels = static_cast<int>(rng.UniformInt(1, 4));
    c.codes_per_level.clear();
    for (int l = 0; l < levels; ++l) {
      c.codes_per_level.push_back(i % 10 == 3 ? 1 : static_cast<int>(rng.UniformInt(1, 9)));
    }
    c.seed = rng.NextU64();
    c.probe_decoded = i % 2 == 0;
    CodecParams p = InitWeights(c);
    p.enc_b1 = RandomMatrix(rng, c.hidden_dim, 1).col(0);
    for (auto& book : p.codebooks) book = RandomMatrix(rng, book.rows(), book.cols());
    SaveCodecCheckpoint(p, c, dir / "n.dsun");
    CodecParams q;
    CodecConfig qc;
    LoadCodecCheckpoint(dir / "n.dsun", &q, &qc);
    bool same = qc.codes_per_level == c.codes_per_level && qc.seed == c.seed &&
                qc.probe_decoded == c.probe_decoded && qc.hidden_dim == c.hidden_dim &&
                q.enc_w1 == p.enc_w1 && q.enc_b1 == p.enc_b1 && q.enc_w2 == p.enc_w2 &&
                q.enc_b2 == p.enc_b2 && q.dec_w1 == p.dec_w1 && q.dec_b1 == p.dec_b1 &&
                q.dec_w2 == p.dec_w2 && q.dec_b2 == p.dec_b2;
    for (int l = 0; l < levels && same; ++l) {
      same = q.codebooks[l] == p.codebooks[l] && q.ema_counts[l] == p.ema_counts[l] &&
             q.ema_sums[l] == p.ema_sums[l];
    }
    dsun += same;
  }
  Report("A8", dsuf == 100 && dsuc == 100 && dsun == 100,
         Fmt("bit-exact round trips DSUF %d/100, DSUC %d/100, DSUN %d/100", dsuf, dsuc, dsun));
}

// ---------------------------------------------------------------------------

int Main() {
  const fs::path dir = fs::temp_directory_path() / ("dsu_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string seed = "42";
  const std::string manifest = (dir / "corpus" / "manifest.json").string();

  if (RunCli({"--seed", seed, "--out", (dir / "corpus").string(), "synth"}) != 0) {
    std::printf("could not generate the default corpus\n");
    return 1;
  }
  const Corpus corpus = LoadCorpus(LoadManifest(manifest));
  std::size_t vowels[3];
  for (int s = 0; s < 3; ++s) {
    vowels[s] = ExtractVowelSegments(SplitView(corpus, static_cast<Split>(s))).size();
  }
  const bool corpus_ok = vowels[0] >= 8000 && vowels[1] >= 1000 && vowels[2] >= 1000;
  std::printf("# default corpus: %zu / %zu / %zu vowel segments (train/validation/test)\n",
              vowels[0], vowels[1], vowels[2]);

  CheckInvariants(corpus);
  CheckRoundTrips(dir);

  // Full comparison, single worker.
  auto t0 = Clock::now();
  const int cmp_code = RunCli({"--seed", seed, "--manifest", manifest, "--out",
                               (dir / "cmp1").string(), "compare", "--workers", "1"});
  const double cmp_seconds = Seconds(t0);
  const auto rows = ReadCsv(dir / "cmp1" / "comparison.csv");
  const auto timing = ReadCsv(dir / "cmp1" / "timing.csv");
  auto row = [&](const std::string& name) { return FindRow(rows, "representation", name); };
  const double lat_phone = Num(row("latent"), "phone_f1");
  const double lat_tone = Num(row("latent"), "tone_f1");
  const auto* lat_time = FindRow(timing, "representation", "latent");
  const double lat_seconds = Num(lat_time, "fit_time_s") + Num(lat_time, "probe_time_s");
  Report("A1", cmp_code == 0 && corpus_ok && lat_phone >= 0.95 && lat_tone >= 0.95 &&
                   lat_seconds <= 600.0,
         Fmt("latent phone F1 %.4f (>= 0.95), tone F1 %.4f (>= 0.95), %.0fs (<= 600s)%s",
             lat_phone, lat_tone, lat_seconds, corpus_ok ? "" : ", corpus below size"));

  const double cl_phone = Num(row("classic-kmeans-500"), "phone_f1");
  const double cl_tone = Num(row("classic-kmeans-500"), "tone_f1");
  Report("A2", std::abs(cl_phone - lat_phone) <= 0.05 && lat_tone - cl_tone >= 0.10,
         Fmt("classic-500 phone F1 %.4f (|diff| %.4f <= 0.05), tone F1 %.4f (drop %.4f >= 0.10)",
             cl_phone, std::abs(cl_phone - lat_phone), cl_tone, lat_tone - cl_tone));

  const double res_tone = Num(row("residual-kmeans-segmental-50+450"), "tone_f1");

  const double vq_mse = Num(row("vq-500"), "val_recon_mse");
  const double rvq_mse = Num(row("rvq-125x4"), "val_recon_mse");
  const double vq_tone = Num(row("vq-500"), "tone_f1");
  const double rvq_tone = Num(row("rvq-125x4"), "tone_f1");
  Report("A4", rvq_mse <= vq_mse && rvq_tone >= vq_tone - 0.02,
         Fmt("validation MSE rvq-125x4 %.6f <= vq-500 %.6f; tone F1 %.4f >= %.4f - 0.02",
             rvq_mse, vq_mse, rvq_tone, vq_tone));

  // Sweep.
  RunCli({"--seed", seed, "--manifest", manifest, "--out", (dir / "sweep").string(), "sweep",
          "--workers", "1"});
  const auto sweep = ReadCsv(dir / "sweep" / "sweep.csv");
  std::vector<std::pair<int, double>> frame_tone;
  for (const auto& r : sweep) {
    if (r.at("variant") == "frame" && r.at("status") == "ok") {
      frame_tone.emplace_back(std::stoi(r.at("k")), std::stod(r.at("tone_f1")));
    }
  }
  bool monotone = frame_tone.size() == 5;
  std::string curve;
  for (std::size_t i = 0; i < frame_tone.size(); ++i) {
    curve += Fmt("%s%d:%.4f", i ? " " : "", frame_tone[i].first, frame_tone[i].second);
    if (i > 0 && frame_tone[i].second < frame_tone[i - 1].second - 0.02) monotone = false;
  }
  const double k1000 = frame_tone.empty() ? NAN : frame_tone.back().second;
  Report("A5", monotone && k1000 < lat_tone,
         Fmt("classic tone F1 by K {%s} non-decreasing within 0.02; K=1000 %.4f < latent %.4f",
             curve.c_str(), k1000, lat_tone));

  // Residual levels.
  RunCli({"--seed", seed, "--manifest", manifest, "--out", (dir / "residual").string(),
          "residual", "--workers", "1"});
  const auto levels = ReadCsv(dir / "residual" / "residual.csv");
  std::map<int, std::pair<double, double>> tone_by_k;  // k -> (L1, L2)
  for (const auto& r : levels) {
    if (r.at("task") != "tone") continue;
    auto& slot = tone_by_k[std::stoi(r.at("k_phone"))];
    (r.at("level") == "L1" ? slot.first : slot.second) = std::stod(r.at("f1"));
  }
  bool l2_wins = tone_by_k.size() == 4;
  std::string pairs;
  for (const auto& [k, v] : tone_by_k) {
    pairs += Fmt("%s%d:%.4f/%.4f", pairs.empty() ? "" : " ", k, v.first, v.second);
    if (!(v.second > v.first)) l2_wins = false;
  }
  Report("A3", res_tone - cl_tone >= 0.05 && l2_wins,
         Fmt("residual-seg tone F1 %.4f - classic %.4f = %.4f (>= 0.05); L1/L2 tone {%s}",
             res_tone, cl_tone, res_tone - cl_tone, pairs.c_str()));

  // Determinism and runtime.
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int workers = static_cast<int>(std::min(8u, hw));
  t0 = Clock::now();
  RunCli({"--seed", seed, "--manifest", manifest, "--out", (dir / "cmp2").string(), "compare",
          "--workers", std::to_string(workers)});
  const double cmp2_seconds = Seconds(t0);
  const std::string csv1 = ReadFile(dir / "cmp1" / "comparison.csv");
  const bool identical = !csv1.empty() && csv1 == ReadFile(dir / "cmp2" / "comparison.csv") &&
                         ReadFile(dir / "cmp1" / "report.md") == ReadFile(dir / "cmp2" / "report.md");
  std::string parallel_note;
  bool parallel_ok = true;
  if (hw >= 8) {
    parallel_ok = cmp2_seconds <= 1200.0;
    parallel_note = Fmt(", 8 workers %.0fs (<= 1200s)", cmp2_seconds);
  } else {
    parallel_note = Fmt(", rerun with %d worker(s) %.0fs; 8-worker limit not measurable on %u "
                        "hardware thread(s)",
                        workers, cmp2_seconds, hw);
  }
  Report("A6", cmp_code == 0 && rows.size() == 9 && cmp_seconds <= 3600.0 && identical &&
                   parallel_ok,
         Fmt("%zu rows, single worker %.0fs (<= 3600s), CSVs %s across reruns%s", rows.size(),
             cmp_seconds, identical ? "identical" : "DIFFER", parallel_note.c_str()));

  fs::remove_all(dir);
  int failures = 0, unexpected = 0;
  for (const Verdict& v : g_verdicts) {
    failures += !v.pass;
    unexpected += v.pass == KnownFailure(v.id);
  }
  std::printf("# %d of %zu criteria passed\n", static_cast<int>(g_verdicts.size()) - failures,
              g_verdicts.size());
  return unexpected == 0 ? 0 : 1;
}

}  // namespace
}  // namespace dsu

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--known-failure") == 0 && i + 1 < argc) {
      dsu::g_known_failures.push_back(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--known-failure A<n>]...\n", argv[0]);
      return 2;
    }
  }
  try {
    return dsu::Main();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
}
