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

#ifndef DSU_NEURAL_VQ_H_
#define DSU_NEURAL_VQ_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsu/corpus.h"
#include "dsu/linalg.h"
#include "dsu/quantisers.h"

namespace dsu {

// Encoder: D -> H (ReLU) -> D_code. Decoder mirrors it. Between them a stack
// of residual codebooks (one level = plain VQ).
struct CodecConfig {
  int input_dim = 64;
  int hidden_dim = 256;
  int code_dim = 0;  // 0 = input_dim
  std::vector<int> codes_per_level{500};
  double commitment_weight = 0.25;
  double ema_decay = 0.99;
  double learning_rate = 1e-3;
  int batch_size = 256;
  int max_epochs = 20;
  int patience = 3;
  // EMA count below which a code is dead and re-seeded at epoch end.
  double dead_code_threshold = 1e-3;
  int warm_start_iters = 10;
  // Probe the decoded reconstruction (default) or the raw centroid sum.
  bool probe_decoded = true;
  uint64_t seed = 42;

  int resolved_code_dim() const { return code_dim > 0 ? code_dim : input_dim; }
  int num_levels() const { return static_cast<int>(codes_per_level.size()); }
};

void ValidateCodecConfig(const CodecConfig& config);

template <typename Scalar>
struct BasicCodecParams {
  Matrix<Scalar> enc_w1;  // H x D
  Vector<Scalar> enc_b1;
  Matrix<Scalar> enc_w2;  // D_code x H
  Vector<Scalar> enc_b2;
  Matrix<Scalar> dec_w1;  // H x D_code
  Vector<Scalar> dec_b1;
  Matrix<Scalar> dec_w2;  // D x H
  Vector<Scalar> dec_b2;
  std::vector<Matrix<Scalar>> codebooks;  // K_l x D_code
  std::vector<Vector<Scalar>> ema_counts;
  std::vector<Matrix<Scalar>> ema_sums;   // K_l x D_code

  template <typename Other>
  BasicCodecParams<Other> Cast() const {
    BasicCodecParams<Other> out;
    out.enc_w1 = enc_w1.template cast<Other>();
    out.enc_b1 = enc_b1.template cast<Other>();
    out.enc_w2 = enc_w2.template cast<Other>();
    out.enc_b2 = enc_b2.template cast<Other>();
    out.dec_w1 = dec_w1.template cast<Other>();
    out.dec_b1 = dec_b1.template cast<Other>();
    out.dec_w2 = dec_w2.template cast<Other>();
    out.dec_b2 = dec_b2.template cast<Other>();
    for (const auto& c : codebooks) out.codebooks.push_back(c.template cast<Other>());
    for (const auto& c : ema_counts) out.ema_counts.push_back(c.template cast<Other>());
    for (const auto& s : ema_sums) out.ema_sums.push_back(s.template cast<Other>());
    return out;
  }

  bool AllFinite() const;
};

using CodecParams = BasicCodecParams<float>;

// Gradients of the trainable (non-codebook) parameters.
template <typename Scalar>
struct CodecGradients {
  Matrix<Scalar> enc_w1, enc_w2, dec_w1, dec_w2;
  Vector<Scalar> enc_b1, enc_b2, dec_b1, dec_b2;
};

// Deterministic weights; codebooks warm-started with k-means on the encoder
// outputs of warm_batch (level by level on the running residual).
// When hidden_dim >= 2 * max(D, D_code) the affine maps start as an exact
// identity through the ReLU layer (W1 = [I; -I; small], W2 = [I, -I, 0]).
CodecParams InitParams(const CodecConfig& config,
                       const Eigen::Ref<const MatrixF>& warm_batch);
// Weights only; codebooks zero-filled. Used by tests that set codebooks.
CodecParams InitWeights(const CodecConfig& config);

template <typename Scalar>
Matrix<Scalar> Encode(const BasicCodecParams<Scalar>& params,
                      const Eigen::Ref<const Matrix<Scalar>>& x);
template <typename Scalar>
Matrix<Scalar> Decode(const BasicCodecParams<Scalar>& params,
                      const Eigen::Ref<const Matrix<Scalar>>& z);

struct RvqResult {
  std::vector<int> codes;  // one per level
  VectorD quantised;       // sum of selected centroids
  std::vector<double> residual_norms;  // |z|, then after each level
};

// Greedy per-level nearest centroid on the running residual.
template <typename Scalar>
RvqResult RvqQuantise(const Eigen::Ref<const Vector<Scalar>>& z,
                      const std::vector<Matrix<Scalar>>& codebooks);

template <typename Scalar>
struct ForwardResult {
  Matrix<Scalar> reconstruction;
  Matrix<Scalar> latent;     // encoder output z
  Matrix<Scalar> quantised;  // z_q
  std::vector<std::vector<int>> codes;  // [level][row]
  std::vector<Matrix<Scalar>> level_inputs;  // residual entering each level
  double reconstruction_mse = 0.0;
  double commitment_mse = 0.0;
  double loss = 0.0;
  // Filled when gradients are requested.
  CodecGradients<Scalar> grads;
  Matrix<Scalar> grad_quantised;  // dL/dz_q from the decoder
  Matrix<Scalar> grad_latent;     // dL/dz: straight-through + commitment
};

// loss = MSE(reconstruction, x) + beta * MSE(z, stopgrad(z_q)). The
// quantiser is treated as identity in the backward pass. Codebooks are not
// touched. kDivergence on a non-finite loss.
template <typename Scalar>
ForwardResult<Scalar> Forward(const BasicCodecParams<Scalar>& params,
                              const Eigen::Ref<const Matrix<Scalar>>& batch,
                              double commitment_weight, bool with_gradients);

// One EMA step of every codebook from the level inputs of a forward pass.
void EmaUpdate(CodecParams* params, const ForwardResult<float>& fwd,
               const CodecConfig& config);

struct CodecEpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_mse = 0.0;
  int dead_codes_reseeded = 0;
};

struct CodecTrainResult {
  CodecParams params;  // best by validation MSE
  std::vector<CodecEpochLog> log;
  int best_epoch = 0;
  double best_validation_mse = 0.0;
  bool stopped_early = false;
};

CodecTrainResult TrainCodec(const SplitView& train, const SplitView& validation,
                            const CodecConfig& config);

// Mean squared reconstruction error over all frames of a split.
double ReconstructionMse(const CodecParams& params, const SplitView& view);

QuantisedSequence EncodeToUnits(const CodecParams& params,
                                const CodecConfig& config,
                                const FeatureSequence& seq);

// DSUN layout: "DSUN", u32 version (1), config block, then parameter tensors
// as float32 in declaration order (per level: codebook, EMA counts, EMA sums).
void SaveCodecCheckpoint(const CodecParams& params, const CodecConfig& config,
                         const std::filesystem::path& path);
void LoadCodecCheckpoint(const std::filesystem::path& path,
                         CodecParams* params, CodecConfig* config);

class NeuralVq final : public Quantiser {
 public:
  NeuralVq(CodecParams params, CodecConfig config)
      : params_(std::move(params)), config_(std::move(config)) {}
  std::string name() const override;
  Granularity granularity() const override { return Granularity::kFrame; }
  std::vector<int> level_sizes() const override {
    return config_.codes_per_level;
  }
  QuantisedSequence Quantise(const Utterance& utt) const override {
    return EncodeToUnits(params_, config_, utt.features);
  }
  // Decoded (or raw) sum of the first `level` centroids.
  MatrixF LevelProbeVectors(const QuantisedSequence& q,
                            int level) const override;
  const CodecParams& params() const { return params_; }
  const CodecConfig& config() const { return config_; }

 private:
  CodecParams params_;
  CodecConfig config_;
};

}  // namespace dsu

#endif  // DSU_NEURAL_VQ_H_
