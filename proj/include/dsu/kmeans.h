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
#ifndef DSU_KMEANS_H_
#define DSU_KMEANS_H_

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "dsu/linalg.h"

namespace dsu {

struct KMeansConfig {
  int k = 1;
  int max_iters = 100;
  double rel_tol = 1e-6;  // stop when relative inertia improvement < rel_tol
  uint64_t seed = 42;
  int num_init_candidates = 1;  // greedy k-means++ when > 1
  int workers = 0;              // 0 = DefaultWorkerCount()
};

void ValidateKMeansConfig(const KMeansConfig& config);

struct FitStats {
  double final_inertia = 0.0;
  int iterations_run = 0;
  std::vector<double> inertia_trace;  // non-increasing
};

struct BatchAssignment {
  std::vector<int> codes;
  double inertia = 0.0;
};

// K x D centroid matrix. Assignment is the exact squared-Euclidean argmin
// with distances accumulated in double; ties go to the lowest index.
class Codebook {
 public:
  Codebook() = default;
  explicit Codebook(MatrixF centroids, int level_id = 0, FitStats stats = {});

  const MatrixF& centroids() const { return centroids_; }
  int size() const { return static_cast<int>(centroids_.rows()); }
  int dim() const { return static_cast<int>(centroids_.cols()); }
  int level_id() const { return level_id_; }
  void set_level_id(int level) { level_id_ = level; }
  const FitStats& stats() const { return stats_; }

  auto centroid(int code) const { return centroids_.row(code); }

  // Returns (code, centroid). kDimensionMismatch on wrong D.
  std::pair<int, RowVectorF> Assign(
      const Eigen::Ref<const RowVectorF>& x) const;

  // Element-wise equal to Assign. The result does not depend on workers.
  BatchAssignment AssignBatch(const Eigen::Ref<const MatrixF>& data,
                              int workers = 0) const;

  // Rows of the centroid matrix selected by codes.
  MatrixF Gather(const std::vector<int>& codes) const;

 private:
  MatrixF centroids_;
  int level_id_ = 0;
  FitStats stats_;
};

// Squared Euclidean distance accumulated in double, dimension by dimension.
template <typename A, typename B>
double SquaredDistance(const A& a, const B& b) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a(i)) - static_cast<double>(b(i));
    sum += d * d;
  }
  return sum;
}

// k-means++ seeding: the first centre uniform, each further centre drawn with
// probability proportional to the squared distance to the nearest chosen one.
// kInsufficientData when N < K.
MatrixF KMeansPlusPlusInit(const Eigen::Ref<const MatrixF>& data,
                           const KMeansConfig& config);

// Lloyd iterations from k-means++ seeds. kInsufficientData when N < K,
// kNonFinite on non-finite input.
Codebook FitKMeans(const Eigen::Ref<const MatrixF>& data,
                   const KMeansConfig& config, int level_id = 0);

// DSUC layout: "DSUC", u32 version (1), u32 K, u32 D, u32 level_id, then
// K*D float32 row-major.
void SaveCodebook(const Codebook& codebook, const std::filesystem::path& path);
Codebook LoadCodebook(const std::filesystem::path& path);

}  // namespace dsu

#endif  // DSU_KMEANS_H_
