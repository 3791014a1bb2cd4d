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

#include "dsu/kmeans.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "binary_io.h"
#include "dsu/error.h"
#include "dsu/parallel.h"
#include "dsu/random.h"

namespace dsu {

namespace {

constexpr std::size_t kChunkRows = 2048;
constexpr char kCodebookMagic[4] = {'D', 'S', 'U', 'C'};
constexpr uint32_t kCodebookVersion = 1;

int ResolveWorkers(int workers) {
  return workers > 0 ? workers : DefaultWorkerCount();
}

// Exact argmin over centroids for rows [begin, end). Candidate centroids are
// screened with a float GEMM, then every centroid whose screened distance is
// within the float error bound of the screened minimum is re-scored exactly
// in double. The result is identical to a brute-force double scan.
double AssignRange(const Eigen::Ref<const MatrixF>& data, const MatrixF& cents,
                   const VectorD& cent_sq_norms, double max_cent_sq_norm,
                   std::size_t begin, std::size_t end, int* codes,
                   double* dists) {
  const Eigen::Index rows = static_cast<Eigen::Index>(end - begin);
  const int k = static_cast<int>(cents.rows());
  const int d = static_cast<int>(cents.cols());
  const auto block = data.middleRows(static_cast<Eigen::Index>(begin), rows);
  const Eigen::MatrixXf dots = block * cents.transpose();
  // |dot error| <= d * u * |x||c| with u = 2^-24; doubled for the norms and
  // kept generous since it only widens the exact re-scoring set.
  const double rel_bound = 4.0 * (d + 2) * std::ldexp(1.0, -24);
  double inertia = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto x = block.row(r);
    double x_sq = 0.0;
    for (int i = 0; i < d; ++i) x_sq += static_cast<double>(x(i)) * x(i);
    double screened_min = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double approx = x_sq - 2.0 * dots(r, c) + cent_sq_norms(c);
      screened_min = std::min(screened_min, approx);
    }
    const double margin = rel_bound * (x_sq + max_cent_sq_norm) + 1e-300;
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double approx = x_sq - 2.0 * dots(r, c) + cent_sq_norms(c);
      if (approx > screened_min + margin) continue;
      const double exact = SquaredDistance(x, cents.row(c));
      if (exact < best_dist) {
        best_dist = exact;
        best = c;
      }
    }
    codes[r] = best;
    if (dists != nullptr) dists[r] = best_dist;
    inertia += best_dist;
  }
  return inertia;
}

struct AssignOutput {
  std::vector<int> codes;
  std::vector<double> dists;
  double inertia = 0.0;
};

AssignOutput AssignAll(const Eigen::Ref<const MatrixF>& data,
                       const MatrixF& cents, int workers, bool keep_dists) {
  const std::size_t n = static_cast<std::size_t>(data.rows());
  AssignOutput out;
  out.codes.resize(n);
  if (keep_dists) out.dists.resize(n);
  VectorD norms(cents.rows());
  double max_norm = 0.0;
  for (Eigen::Index c = 0; c < cents.rows(); ++c) {
    norms(c) = cents.row(c).cast<double>().squaredNorm();
    max_norm = std::max(max_norm, norms(c));
  }
  std::vector<double> partial(NumChunks(n, kChunkRows), 0.0);
  ParallelForChunks(n, kChunkRows, workers,
                    [&](std::size_t chunk, std::size_t b, std::size_t e) {
                      partial[chunk] = AssignRange(
                          data, cents, norms, max_norm, b, e,
                          out.codes.data() + b,
                          keep_dists ? out.dists.data() + b : nullptr);
                    });
  for (double p : partial) out.inertia += p;
  return out;
}

void CheckFinite(const Eigen::Ref<const MatrixF>& data) {
  if (!data.allFinite()) {
    Fail(ErrorKind::kNonFinite, "k-means input contains non-finite values");
  }
}

}  // namespace

void ValidateKMeansConfig(const KMeansConfig& config) {
  if (config.k < 1) Fail(ErrorKind::kInvalidArgument, "k-means: k must be >= 1");
  if (config.max_iters < 1) {
    Fail(ErrorKind::kInvalidArgument, "k-means: max_iters must be >= 1");
  }
  if (!(config.rel_tol >= 0)) {
    Fail(ErrorKind::kInvalidArgument, "k-means: rel_tol must be >= 0");
  }
  if (config.num_init_candidates < 1) {
    Fail(ErrorKind::kInvalidArgument,
         "k-means: num_init_candidates must be >= 1");
  }
}

Codebook::Codebook(MatrixF centroids, int level_id, FitStats stats)
    : centroids_(std::move(centroids)),
      level_id_(level_id),
      stats_(std::move(stats)) {}

std::pair<int, RowVectorF> Codebook::Assign(
    const Eigen::Ref<const RowVectorF>& x) const {
  if (x.size() != dim()) {
    Fail(ErrorKind::kDimensionMismatch,
         "assign: vector has D=" + std::to_string(x.size()) +
             ", codebook has D=" + std::to_string(dim()));
  }
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int c = 0; c < size(); ++c) {
    const double dist = SquaredDistance(x, centroids_.row(c));
    if (dist < best_dist) {
      best_dist = dist;
      best = c;
    }
  }
  return {best, centroids_.row(best)};
}

BatchAssignment Codebook::AssignBatch(const Eigen::Ref<const MatrixF>& data,
                                      int workers) const {
  if (data.cols() != dim()) {
    Fail(ErrorKind::kDimensionMismatch,
         "assign_batch: data has D=" + std::to_string(data.cols()) +
             ", codebook has D=" + std::to_string(dim()));
  }
  AssignOutput out = AssignAll(data, centroids_, ResolveWorkers(workers), false);
  return BatchAssignment{std::move(out.codes), out.inertia};
}

MatrixF Codebook::Gather(const std::vector<int>& codes) const {
  MatrixF out(codes.size(), dim());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    out.row(i) = centroids_.row(codes[i]);
  }
  return out;
}

MatrixF KMeansPlusPlusInit(const Eigen::Ref<const MatrixF>& data,
                           const KMeansConfig& config) {
  ValidateKMeansConfig(config);
  const std::size_t n = static_cast<std::size_t>(data.rows());
  const int k = config.k;
  if (n < static_cast<std::size_t>(k)) {
    Fail(ErrorKind::kInsufficientData,
         "k-means: need at least K=" + std::to_string(k) + " points, got " +
             std::to_string(n));
  }
  const int workers = ResolveWorkers(config.workers);
  Rng rng(config.seed);
  MatrixF centres(k, data.cols());
  std::vector<char> chosen(n, 0);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());

  // Folds a new centre into `nearest`; returns the resulting potential.
  auto fold = [&](std::size_t centre, std::vector<double>* target) {
    std::vector<double> partial(NumChunks(n, kChunkRows), 0.0);
    const auto c = data.row(static_cast<Eigen::Index>(centre));
    ParallelForChunks(n, kChunkRows, workers,
                      [&](std::size_t chunk, std::size_t b, std::size_t e) {
                        double sum = 0.0;
                        for (std::size_t i = b; i < e; ++i) {
                          const double d = SquaredDistance(
                              data.row(static_cast<Eigen::Index>(i)), c);
                          (*target)[i] = std::min(nearest[i], d);
                          sum += (*target)[i];
                        }
                        partial[chunk] = sum;
                      });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
  };

  auto sample = [&](double total) -> std::size_t {
    if (!(total > 0.0)) {
      // Every remaining point coincides with a centre.
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) return i;
      }
      return 0;
    }
    const double target = rng.Uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (nearest[i] <= 0.0) continue;
      acc += nearest[i];
      last_positive = i;
      if (acc > target) return i;
    }
    return last_positive;
  };

  std::size_t first = static_cast<std::size_t>(
      rng.UniformInt(0, static_cast<int64_t>(n) - 1));
  centres.row(0) = data.row(static_cast<Eigen::Index>(first));
  chosen[first] = 1;
  double potential = fold(first, &nearest);

  std::vector<double> trial(n);
  std::vector<double> best_trial(n);
  for (int j = 1; j < k; ++j) {
    std::size_t pick = sample(potential);
    if (config.num_init_candidates > 1 && potential > 0.0) {
      double best_potential = fold(pick, &best_trial);
      for (int t = 1; t < config.num_init_candidates; ++t) {
        const std::size_t cand = sample(potential);
        const double p = fold(cand, &trial);
        if (p < best_potential) {
          best_potential = p;
          pick = cand;
          std::swap(trial, best_trial);
        }
      }
      nearest.swap(best_trial);
      potential = best_potential;
    } else {
      potential = fold(pick, &nearest);
    }
    centres.row(j) = data.row(static_cast<Eigen::Index>(pick));
    chosen[pick] = 1;
  }
  return centres;
}

Codebook FitKMeans(const Eigen::Ref<const MatrixF>& data,
                   const KMeansConfig& config, int level_id) {
  ValidateKMeansConfig(config);
  CheckFinite(data);
  const int workers = ResolveWorkers(config.workers);
  const int k = config.k;
  const std::size_t n = static_cast<std::size_t>(data.rows());
  const Eigen::Index dim = data.cols();

  MatrixF centroids = KMeansPlusPlusInit(data, config);
  AssignOutput current = AssignAll(data, centroids, workers, true);
  FitStats stats;
  stats.inertia_trace.push_back(current.inertia);

  for (int iter = 0; iter < config.max_iters; ++iter) {
    // Empty-cluster repair: each empty cluster, in ascending index order,
    // takes the point farthest from its current centroid.
    std::vector<int> counts(k, 0);
    for (int c : current.codes) ++counts[c];
    std::vector<int> codes = current.codes;
    std::vector<double> dists = current.dists;
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = 0;
      double far_dist = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (dists[i] > far_dist && counts[codes[i]] > 1) {
          far_dist = dists[i];
          far = i;
        }
      }
      if (far_dist < 0.0) continue;
      --counts[codes[far]];
      codes[far] = c;
      dists[far] = 0.0;
      counts[c] = 1;
    }

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, dim);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(codes[i]) +=
          data.row(static_cast<Eigen::Index>(i)).cast<double>();
    }
    MatrixF updated = centroids;
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        updated.row(c) = (sums.row(c) / static_cast<double>(counts[c]))
                             .cast<float>();
      }
    }

    AssignOutput next = AssignAll(data, updated, workers, true);
    const double prev = current.inertia;
    if (next.inertia > prev) {
      // Float rounding of the means can undo a vanishing improvement; keep
      // the previous solution so the trace stays monotone.
      break;
    }
    centroids = std::move(updated);
    current = std::move(next);
    stats.inertia_trace.push_back(current.inertia);
    stats.iterations_run = iter + 1;
    if (prev <= 0.0 || (prev - current.inertia) < config.rel_tol * prev) break;
  }
  stats.final_inertia = current.inertia;
  return Codebook(std::move(centroids), level_id, std::move(stats));
}

void SaveCodebook(const Codebook& codebook, const std::filesystem::path& path) {
  if (!codebook.centroids().allFinite()) {
    Fail(ErrorKind::kNonFinite, "codebook has non-finite centroids");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot write codebook " + path.string());
  out.write(kCodebookMagic, 4);
  internal::WriteU32(out, kCodebookVersion);
  internal::WriteU32(out, static_cast<uint32_t>(codebook.size()));
  internal::WriteU32(out, static_cast<uint32_t>(codebook.dim()));
  internal::WriteU32(out, static_cast<uint32_t>(codebook.level_id()));
  internal::WriteF32(out, codebook.centroids().data(),
                     codebook.centroids().size());
  if (!out) Fail(ErrorKind::kIo, "write failed for " + path.string());
}

Codebook LoadCodebook(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open codebook " + path.string());
  const std::string name = path.string();
  internal::ReadHeader(in, kCodebookMagic, kCodebookVersion, name);
  uint32_t k = 0, d = 0, level = 0;
  if (!internal::ReadU32(in, &k) || !internal::ReadU32(in, &d) ||
      !internal::ReadU32(in, &level)) {
    Fail(ErrorKind::kTruncated, name + ": file too short for header");
  }
  if (k == 0 || d == 0) Fail(ErrorKind::kFormat, name + ": empty codebook");
  MatrixF centroids(k, d);
  if (!internal::ReadF32(in, centroids.data(),
                         static_cast<std::size_t>(k) * d)) {
    Fail(ErrorKind::kTruncated, name + ": centroid payload is truncated");
  }
  if (!centroids.allFinite()) {
    Fail(ErrorKind::kNonFinite, name + ": non-finite centroid value");
  }
  return Codebook(std::move(centroids), static_cast<int>(level));
}

}  // namespace dsu
