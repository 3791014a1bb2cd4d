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

#include "dsu/neural_vq.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.h"
#include "dsu/error.h"
#include "dsu/kmeans.h"
#include "dsu/random.h"

namespace dsu {

namespace {

constexpr char kCodecMagic[4] = {'D', 'S', 'U', 'N'};
constexpr uint32_t kCodecVersion = 1;
constexpr Eigen::Index kEvalChunk = 4096;

// Exact nearest centroid per row (ties to the lowest index). Candidates are
// screened with a GEMM and re-scored in double, as in the k-means engine.
template <typename Scalar>
std::vector<int> NearestRows(const Eigen::Ref<const Matrix<Scalar>>& rows,
                             const Matrix<Scalar>& cents) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index k = cents.rows();
  const Eigen::Index d = cents.cols();
  std::vector<int> codes(n, 0);
  if (n == 0) return codes;
  const Matrix<Scalar> dots = rows * cents.transpose();
  Vector<double> cent_sq(k);
  double max_cent_sq = 0.0;
  for (Eigen::Index c = 0; c < k; ++c) {
    cent_sq(c) = cents.row(c).template cast<double>().squaredNorm();
    max_cent_sq = std::max(max_cent_sq, cent_sq(c));
  }
  const double eps = std::numeric_limits<Scalar>::epsilon();
  const double rel_bound = 4.0 * static_cast<double>(d + 2) * eps;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double x_sq = rows.row(r).template cast<double>().squaredNorm();
    double screened = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < k; ++c) {
      screened = std::min(screened, x_sq - 2.0 * dots(r, c) + cent_sq(c));
    }
    const double margin = rel_bound * (x_sq + max_cent_sq) + 1e-300;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < k; ++c) {
      if (x_sq - 2.0 * dots(r, c) + cent_sq(c) > screened + margin) continue;
      const double exact = SquaredDistance(rows.row(r), cents.row(c));
      if (exact < best) {
        best = exact;
        codes[r] = static_cast<int>(c);
      }
    }
  }
  return codes;
}

template <typename Scalar>
Matrix<Scalar> Relu(const Matrix<Scalar>& a) {
  return a.cwiseMax(Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> Affine(const Eigen::Ref<const Matrix<Scalar>>& x,
                      const Matrix<Scalar>& w, const Vector<Scalar>& b) {
  Matrix<Scalar> out = x * w.transpose();
  out.rowwise() += b.transpose();
  return out;
}

template <typename Scalar>
Matrix<Scalar> GatherRows(const Matrix<Scalar>& table,
                          const std::vector<int>& codes) {
  Matrix<Scalar> out(codes.size(), table.cols());
  for (std::size_t i = 0; i < codes.size(); ++i) out.row(i) = table.row(codes[i]);
  return out;
}

// Identity-through-ReLU block: rows [I; -I; noise] or columns [I, -I, 0].
void IdentityExpand(Rng& rng, int in, int hidden, MatrixF* up, MatrixF* down,
                    int out) {
  up->setZero(hidden, in);
  down->setZero(out, hidden);
  for (int i = 0; i < in; ++i) {
    (*up)(i, i) = 1.0f;
    (*up)(in + i, i) = -1.0f;
  }
  for (int r = 2 * in; r < hidden; ++r) {
    for (int c = 0; c < in; ++c) (*up)(r, c) = 0.01f * static_cast<float>(rng.Normal());
  }
  for (int i = 0; i < out; ++i) {
    (*down)(i, i) = 1.0f;
    (*down)(i, in + i) = -1.0f;
  }
}

void XavierFill(Rng& rng, MatrixF* m) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m->rows() + m->cols()));
  for (Eigen::Index r = 0; r < m->rows(); ++r) {
    for (Eigen::Index c = 0; c < m->cols(); ++c) {
      (*m)(r, c) = static_cast<float>((2.0 * rng.Uniform() - 1.0) * limit);
    }
  }
}

}  // namespace

void ValidateCodecConfig(const CodecConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) Fail(ErrorKind::kInvalidArgument, "codec config: " + msg);
  };
  require(c.input_dim >= 1, "input_dim must be >= 1");
  require(c.hidden_dim >= 1, "hidden_dim must be >= 1");
  require(c.code_dim >= 0, "code_dim must be >= 0");
  require(!c.codes_per_level.empty(), "need at least one codebook level");
  for (int k : c.codes_per_level) require(k >= 1, "codebook sizes must be >= 1");
  require(c.commitment_weight >= 0, "commitment_weight must be >= 0");
  require(c.ema_decay > 0 && c.ema_decay <= 1, "ema_decay must be in (0, 1]");
  require(c.learning_rate > 0 && c.learning_rate <= 1,
          "learning_rate must be in (0, 1]");
  require(c.batch_size >= 1 && c.max_epochs >= 1 && c.patience >= 1,
          "batch_size, max_epochs and patience must be >= 1");
}

template <typename Scalar>
bool BasicCodecParams<Scalar>::AllFinite() const {
  bool ok = enc_w1.allFinite() && enc_b1.allFinite() && enc_w2.allFinite() &&
            enc_b2.allFinite() && dec_w1.allFinite() && dec_b1.allFinite() &&
            dec_w2.allFinite() && dec_b2.allFinite();
  for (const auto& c : codebooks) ok = ok && c.allFinite();
  for (const auto& s : ema_sums) ok = ok && s.allFinite();
  return ok;
}

CodecParams InitWeights(const CodecConfig& config) {
  ValidateCodecConfig(config);
  const int d = config.input_dim;
  const int dc = config.resolved_code_dim();
  const int h = config.hidden_dim;
  Rng rng(DeriveSeed(config.seed, 100));
  CodecParams p;
  if (d == dc && h >= 2 * d) {
    IdentityExpand(rng, d, h, &p.enc_w1, &p.enc_w2, dc);
    IdentityExpand(rng, dc, h, &p.dec_w1, &p.dec_w2, d);
  } else {
    p.enc_w1.resize(h, d);
    p.enc_w2.resize(dc, h);
    p.dec_w1.resize(h, dc);
    p.dec_w2.resize(d, h);
    XavierFill(rng, &p.enc_w1);
    XavierFill(rng, &p.enc_w2);
    XavierFill(rng, &p.dec_w1);
    XavierFill(rng, &p.dec_w2);
  }
  p.enc_b1 = VectorF::Zero(h);
  p.enc_b2 = VectorF::Zero(dc);
  p.dec_b1 = VectorF::Zero(h);
  p.dec_b2 = VectorF::Zero(d);
  for (int k : config.codes_per_level) {
    p.codebooks.push_back(MatrixF::Zero(k, dc));
    p.ema_counts.push_back(VectorF::Ones(k));
    p.ema_sums.push_back(MatrixF::Zero(k, dc));
  }
  return p;
}

CodecParams InitParams(const CodecConfig& config,
                       const Eigen::Ref<const MatrixF>& warm_batch) {
  CodecParams p = InitWeights(config);
  if (warm_batch.cols() != config.input_dim) {
    Fail(ErrorKind::kDimensionMismatch, "codec warm-start batch has wrong D");
  }
  MatrixF residual = Encode<float>(p, warm_batch);
  for (int level = 0; level < config.num_levels(); ++level) {
    KMeansConfig km;
    km.k = config.codes_per_level[level];
    km.max_iters = config.warm_start_iters;
    km.seed = DeriveSeed(config.seed, 200 + level);
    km.workers = 1;
    const Codebook cb = FitKMeans(residual, km, level + 1);
    p.codebooks[level] = cb.centroids();
    p.ema_counts[level] = VectorF::Ones(km.k);
    p.ema_sums[level] = cb.centroids();
    const std::vector<int> codes = NearestRows<float>(residual, p.codebooks[level]);
    residual -= GatherRows<float>(p.codebooks[level], codes);
  }
  return p;
}

template <typename Scalar>
Matrix<Scalar> Encode(const BasicCodecParams<Scalar>& p,
                      const Eigen::Ref<const Matrix<Scalar>>& x) {
  const Matrix<Scalar> h = Relu<Scalar>(Affine<Scalar>(x, p.enc_w1, p.enc_b1));
  return Affine<Scalar>(h, p.enc_w2, p.enc_b2);
}

template <typename Scalar>
Matrix<Scalar> Decode(const BasicCodecParams<Scalar>& p,
                      const Eigen::Ref<const Matrix<Scalar>>& z) {
  const Matrix<Scalar> h = Relu<Scalar>(Affine<Scalar>(z, p.dec_w1, p.dec_b1));
  return Affine<Scalar>(h, p.dec_w2, p.dec_b2);
}

template <typename Scalar>
RvqResult RvqQuantise(const Eigen::Ref<const Vector<Scalar>>& z,
                      const std::vector<Matrix<Scalar>>& codebooks) {
  RvqResult out;
  Matrix<Scalar> residual = z.transpose();
  Matrix<Scalar> quantised = Matrix<Scalar>::Zero(1, z.size());
  out.residual_norms.push_back(residual.template cast<double>().norm());
  for (const Matrix<Scalar>& cb : codebooks) {
    if (cb.cols() != z.size()) {
      Fail(ErrorKind::kDimensionMismatch, "rvq: codebook width differs from z");
    }
    const int code = NearestRows<Scalar>(residual, cb)[0];
    out.codes.push_back(code);
    quantised += cb.row(code);
    residual -= cb.row(code);
    out.residual_norms.push_back(residual.template cast<double>().norm());
  }
  out.quantised = quantised.row(0).transpose().template cast<double>();
  return out;
}

template <typename Scalar>
ForwardResult<Scalar> Forward(const BasicCodecParams<Scalar>& p,
                              const Eigen::Ref<const Matrix<Scalar>>& x,
                              double commitment_weight, bool with_gradients) {
  ForwardResult<Scalar> r;
  const Eigen::Index n = x.rows();
  const Matrix<Scalar> a1 = Affine<Scalar>(x, p.enc_w1, p.enc_b1);
  const Matrix<Scalar> h1 = Relu<Scalar>(a1);
  r.latent = Affine<Scalar>(h1, p.enc_w2, p.enc_b2);

  Matrix<Scalar> residual = r.latent;
  r.quantised = Matrix<Scalar>::Zero(n, r.latent.cols());
  for (const Matrix<Scalar>& cb : p.codebooks) {
    r.level_inputs.push_back(residual);
    std::vector<int> codes = NearestRows<Scalar>(residual, cb);
    const Matrix<Scalar> chosen = GatherRows<Scalar>(cb, codes);
    r.quantised += chosen;
    residual -= chosen;
    r.codes.push_back(std::move(codes));
  }

  const Matrix<Scalar> a3 = Affine<Scalar>(r.quantised, p.dec_w1, p.dec_b1);
  const Matrix<Scalar> h3 = Relu<Scalar>(a3);
  r.reconstruction = Affine<Scalar>(h3, p.dec_w2, p.dec_b2);

  const Matrix<Scalar> recon_err = r.reconstruction - x;
  const Matrix<Scalar> commit_err = r.latent - r.quantised;
  const double recon_count = static_cast<double>(recon_err.size());
  const double commit_count = static_cast<double>(commit_err.size());
  r.reconstruction_mse =
      recon_err.template cast<double>().squaredNorm() / recon_count;
  r.commitment_mse =
      commit_err.template cast<double>().squaredNorm() / commit_count;
  r.loss = r.reconstruction_mse + commitment_weight * r.commitment_mse;
  if (!std::isfinite(r.loss)) {
    Fail(ErrorKind::kDivergence,
         "codec loss is not finite (reconstruction " +
             std::to_string(r.reconstruction_mse) + ", commitment " +
             std::to_string(r.commitment_mse) + ")");
  }
  if (!with_gradients) return r;

  const Matrix<Scalar> d_recon = recon_err * Scalar(2.0 / recon_count);
  CodecGradients<Scalar>& g = r.grads;
  g.dec_w2 = d_recon.transpose() * h3;
  g.dec_b2 = d_recon.colwise().sum().transpose();
  Matrix<Scalar> d_a3 = d_recon * p.dec_w2;
  d_a3 = d_a3.cwiseProduct((a3.array() > Scalar(0)).template cast<Scalar>().matrix());
  g.dec_w1 = d_a3.transpose() * r.quantised;
  g.dec_b1 = d_a3.colwise().sum().transpose();
  r.grad_quantised = d_a3 * p.dec_w1;

  // Straight-through: dz = dz_q, plus the commitment term on z alone.
  r.grad_latent = r.grad_quantised +
                  commit_err * Scalar(2.0 * commitment_weight / commit_count);
  g.enc_w2 = r.grad_latent.transpose() * h1;
  g.enc_b2 = r.grad_latent.colwise().sum().transpose();
  Matrix<Scalar> d_a1 = r.grad_latent * p.enc_w2;
  d_a1 = d_a1.cwiseProduct((a1.array() > Scalar(0)).template cast<Scalar>().matrix());
  g.enc_w1 = d_a1.transpose() * x;
  g.enc_b1 = d_a1.colwise().sum().transpose();
  return r;
}

void EmaUpdate(CodecParams* p, const ForwardResult<float>& fwd,
               const CodecConfig& config) {
  const float decay = static_cast<float>(config.ema_decay);
  for (std::size_t level = 0; level < p->codebooks.size(); ++level) {
    const int k = static_cast<int>(p->codebooks[level].rows());
    VectorF counts = VectorF::Zero(k);
    MatrixF sums = MatrixF::Zero(k, p->codebooks[level].cols());
    const std::vector<int>& codes = fwd.codes[level];
    for (std::size_t i = 0; i < codes.size(); ++i) {
      counts(codes[i]) += 1.0f;
      sums.row(codes[i]) += fwd.level_inputs[level].row(i);
    }
    p->ema_counts[level] = decay * p->ema_counts[level] + (1.0f - decay) * counts;
    p->ema_sums[level] = decay * p->ema_sums[level] + (1.0f - decay) * sums;
    for (int c = 0; c < k; ++c) {
      if (p->ema_counts[level](c) > config.dead_code_threshold) {
        p->codebooks[level].row(c) =
            p->ema_sums[level].row(c) / p->ema_counts[level](c);
      }
    }
  }
}

namespace {

void SgdStep(CodecParams* p, const CodecGradients<float>& g, float lr) {
  p->enc_w1 -= lr * g.enc_w1;
  p->enc_b1 -= lr * g.enc_b1;
  p->enc_w2 -= lr * g.enc_w2;
  p->enc_b2 -= lr * g.enc_b2;
  p->dec_w1 -= lr * g.dec_w1;
  p->dec_b1 -= lr * g.dec_b1;
  p->dec_w2 -= lr * g.dec_w2;
  p->dec_b2 -= lr * g.dec_b2;
}

MatrixF GatherFrames(const MatrixF& frames, const std::vector<int>& order,
                     std::size_t begin, std::size_t end) {
  MatrixF batch(end - begin, frames.cols());
  for (std::size_t i = begin; i < end; ++i) batch.row(i - begin) = frames.row(order[i]);
  return batch;
}

double MseOnFrames(const CodecParams& params, const MatrixF& frames) {
  double sum = 0.0;
  for (Eigen::Index b = 0; b < frames.rows(); b += kEvalChunk) {
    const Eigen::Index rows = std::min(kEvalChunk, frames.rows() - b);
    const ForwardResult<float> r =
        Forward<float>(params, frames.middleRows(b, rows), 0.0, false);
    sum += r.reconstruction_mse * static_cast<double>(rows * frames.cols());
  }
  return sum / static_cast<double>(frames.size());
}

// Re-seeds codes whose EMA count fell below the threshold to level inputs
// of randomly drawn training frames.
int ReseedDeadCodes(CodecParams* p, const MatrixF& frames,
                    const CodecConfig& config, Rng& rng) {
  int reseeded = 0;
  std::vector<int> dead_per_level;
  int max_dead = 0;
  for (const VectorF& counts : p->ema_counts) {
    int dead = 0;
    for (Eigen::Index c = 0; c < counts.size(); ++c) {
      if (counts(c) < config.dead_code_threshold) ++dead;
    }
    dead_per_level.push_back(dead);
    max_dead = std::max(max_dead, dead);
  }
  if (max_dead == 0) return 0;
  std::vector<int> rows(max_dead);
  for (int& r : rows) {
    r = static_cast<int>(rng.UniformInt(0, frames.rows() - 1));
  }
  const MatrixF sample = GatherFrames(frames, rows, 0, rows.size());
  const ForwardResult<float> fwd = Forward<float>(*p, sample, 0.0, false);
  for (std::size_t level = 0; level < p->codebooks.size(); ++level) {
    int next = 0;
    VectorF& counts = p->ema_counts[level];
    for (Eigen::Index c = 0; c < counts.size(); ++c) {
      if (counts(c) >= config.dead_code_threshold) continue;
      p->codebooks[level].row(c) = fwd.level_inputs[level].row(next++);
      counts(c) = 1.0f;
      p->ema_sums[level].row(c) = p->codebooks[level].row(c);
      ++reseeded;
    }
  }
  return reseeded;
}

}  // namespace

double ReconstructionMse(const CodecParams& params, const SplitView& view) {
  return MseOnFrames(params, StackFrames(view));
}

CodecTrainResult TrainCodec(const SplitView& train, const SplitView& validation,
                            const CodecConfig& config) {
  ValidateCodecConfig(config);
  if (train.empty()) {
    Fail(ErrorKind::kInsufficientData, "codec training split is empty");
  }
  if (validation.empty()) {
    Fail(ErrorKind::kInsufficientData, "codec validation split is empty");
  }
  if (train.feature_dim() != config.input_dim) {
    Fail(ErrorKind::kDimensionMismatch, "codec input_dim differs from corpus D");
  }
  SplitAudit::RecordTrainingAccess(train.split());
  SplitAudit::RecordTrainingAccess(validation.split());
  const MatrixF frames = StackFrames(train);
  const MatrixF val_frames = StackFrames(validation);
  const std::size_t n = static_cast<std::size_t>(frames.rows());
  Rng rng(config.seed);

  std::vector<int> order = rng.Permutation(static_cast<int>(n));
  // The warm-start batch must hold at least as many rows as the widest
  // codebook, so it may span several training batches.
  const int widest = *std::max_element(config.codes_per_level.begin(),
                                       config.codes_per_level.end());
  const std::size_t warm_rows = std::min<std::size_t>(
      n, std::max<std::size_t>(config.batch_size, 4 * static_cast<std::size_t>(widest)));
  if (warm_rows < static_cast<std::size_t>(widest)) {
    Fail(ErrorKind::kInsufficientData,
         "codec needs at least " + std::to_string(widest) + " training frames");
  }
  CodecParams params =
      InitParams(config, GatherFrames(frames, order, 0, warm_rows));

  CodecTrainResult result;
  result.best_validation_mse = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const float lr = static_cast<float>(config.learning_rate);
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (epoch > 1) order = rng.Permutation(static_cast<int>(n));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < n; b += config.batch_size) {
      const std::size_t e = std::min(n, b + config.batch_size);
      const MatrixF batch = GatherFrames(frames, order, b, e);
      const ForwardResult<float> fwd =
          Forward<float>(params, batch, config.commitment_weight, true);
      SgdStep(&params, fwd.grads, lr);
      EmaUpdate(&params, fwd, config);
      loss_sum += fwd.loss;
      ++batches;
    }
    CodecEpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(batches);
    entry.dead_codes_reseeded = ReseedDeadCodes(&params, frames, config, rng);
    entry.validation_mse = MseOnFrames(params, val_frames);
    if (!std::isfinite(entry.validation_mse) || !params.AllFinite()) {
      Fail(ErrorKind::kDivergence,
           "codec diverged at epoch " + std::to_string(epoch));
    }
    result.log.push_back(entry);
    if (entry.validation_mse < result.best_validation_mse) {
      result.best_validation_mse = entry.validation_mse;
      result.best_epoch = epoch;
      result.params = params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

QuantisedSequence EncodeToUnits(const CodecParams& params,
                                const CodecConfig& config,
                                const FeatureSequence& seq) {
  if (seq.dim() != config.input_dim) {
    Fail(ErrorKind::kDimensionMismatch,
         "codec expects D=" + std::to_string(config.input_dim) + ", got D=" +
             std::to_string(seq.dim()));
  }
  const ForwardResult<float> fwd = Forward<float>(params, seq.frames, 0.0, false);
  QuantisedSequence q;
  q.utterance_id = seq.utterance_id;
  q.granularity = Granularity::kFrame;
  q.codes = fwd.codes;
  q.probe_vectors = config.probe_decoded ? fwd.reconstruction : fwd.quantised;
  return q;
}

std::string NeuralVq::name() const {
  const std::vector<int>& k = config_.codes_per_level;
  if (k.size() == 1) return "vq-" + std::to_string(k[0]);
  bool uniform = std::all_of(k.begin(), k.end(), [&](int v) { return v == k[0]; });
  if (uniform) return "rvq-" + std::to_string(k[0]) + "x" + std::to_string(k.size());
  std::string s = "rvq";
  for (int v : k) s += "-" + std::to_string(v);
  return s;
}

MatrixF NeuralVq::LevelProbeVectors(const QuantisedSequence& q,
                                    int level) const {
  if (level < 1 || level > config_.num_levels()) {
    Fail(ErrorKind::kInvalidArgument, name() + ": no level " + std::to_string(level));
  }
  MatrixF sum = MatrixF::Zero(q.num_positions(), params_.codebooks[0].cols());
  for (int l = 0; l < level; ++l) {
    sum += GatherRows<float>(params_.codebooks[l], q.codes[l]);
  }
  return config_.probe_decoded ? Decode<float>(params_, sum) : sum;
}

// ---------------------------------------------------------------------------
// Checkpoints.

namespace {

void WriteF64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
bool ReadF64(std::istream& in, double* v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(v), sizeof(*v)));
}

void WriteTensor(std::ostream& out, const MatrixF& m) {
  internal::WriteF32(out, m.data(), m.size());
}
void WriteTensor(std::ostream& out, const VectorF& v) {
  internal::WriteF32(out, v.data(), v.size());
}

template <typename T>
void ReadTensor(std::istream& in, T* t, const std::string& name) {
  if (!internal::ReadF32(in, t->data(), static_cast<std::size_t>(t->size()))) {
    Fail(ErrorKind::kTruncated, name + ": parameter payload is truncated");
  }
}

}  // namespace

void SaveCodecCheckpoint(const CodecParams& p, const CodecConfig& c,
                         const std::filesystem::path& path) {
  ValidateCodecConfig(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot write codec checkpoint " + path.string());
  out.write(kCodecMagic, 4);
  internal::WriteU32(out, kCodecVersion);
  internal::WriteU32(out, static_cast<uint32_t>(c.input_dim));
  internal::WriteU32(out, static_cast<uint32_t>(c.hidden_dim));
  internal::WriteU32(out, static_cast<uint32_t>(c.resolved_code_dim()));
  internal::WriteU32(out, static_cast<uint32_t>(c.num_levels()));
  for (int k : c.codes_per_level) internal::WriteU32(out, static_cast<uint32_t>(k));
  WriteF64(out, c.commitment_weight);
  WriteF64(out, c.ema_decay);
  WriteF64(out, c.learning_rate);
  WriteF64(out, c.dead_code_threshold);
  internal::WriteU32(out, static_cast<uint32_t>(c.batch_size));
  internal::WriteU32(out, static_cast<uint32_t>(c.max_epochs));
  internal::WriteU32(out, static_cast<uint32_t>(c.patience));
  internal::WriteU32(out, static_cast<uint32_t>(c.warm_start_iters));
  internal::WriteU32(out, c.probe_decoded ? 1u : 0u);
  internal::WriteU32(out, static_cast<uint32_t>(c.seed & 0xffffffffu));
  internal::WriteU32(out, static_cast<uint32_t>(c.seed >> 32));
  WriteTensor(out, p.enc_w1);
  WriteTensor(out, p.enc_b1);
  WriteTensor(out, p.enc_w2);
  WriteTensor(out, p.enc_b2);
  WriteTensor(out, p.dec_w1);
  WriteTensor(out, p.dec_b1);
  WriteTensor(out, p.dec_w2);
  WriteTensor(out, p.dec_b2);
  for (int l = 0; l < c.num_levels(); ++l) {
    WriteTensor(out, p.codebooks[l]);
    WriteTensor(out, p.ema_counts[l]);
    WriteTensor(out, p.ema_sums[l]);
  }
  if (!out) Fail(ErrorKind::kIo, "write failed for " + path.string());
}

void LoadCodecCheckpoint(const std::filesystem::path& path, CodecParams* p,
                         CodecConfig* c) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open codec checkpoint " + path.string());
  const std::string name = path.string();
  internal::ReadHeader(in, kCodecMagic, kCodecVersion, name);
  auto u32 = [&]() {
    uint32_t v = 0;
    if (!internal::ReadU32(in, &v)) {
      Fail(ErrorKind::kTruncated, name + ": config block is truncated");
    }
    return v;
  };
  auto f64 = [&]() {
    double v = 0;
    if (!ReadF64(in, &v)) {
      Fail(ErrorKind::kTruncated, name + ": config block is truncated");
    }
    return v;
  };
  CodecConfig cfg;
  cfg.input_dim = static_cast<int>(u32());
  cfg.hidden_dim = static_cast<int>(u32());
  cfg.code_dim = static_cast<int>(u32());
  const uint32_t levels = u32();
  if (levels == 0 || levels > 64) Fail(ErrorKind::kFormat, name + ": bad level count");
  cfg.codes_per_level.clear();
  for (uint32_t l = 0; l < levels; ++l) cfg.codes_per_level.push_back(static_cast<int>(u32()));
  cfg.commitment_weight = f64();
  cfg.ema_decay = f64();
  cfg.learning_rate = f64();
  cfg.dead_code_threshold = f64();
  cfg.batch_size = static_cast<int>(u32());
  cfg.max_epochs = static_cast<int>(u32());
  cfg.patience = static_cast<int>(u32());
  cfg.warm_start_iters = static_cast<int>(u32());
  cfg.probe_decoded = u32() != 0;
  const uint64_t lo = u32();
  const uint64_t hi = u32();
  cfg.seed = lo | (hi << 32);
  try {
    ValidateCodecConfig(cfg);
  } catch (const Error& e) {
    Fail(ErrorKind::kFormat, name + ": " + e.what());
  }
  const int d = cfg.input_dim, h = cfg.hidden_dim, dc = cfg.resolved_code_dim();
  CodecParams params;
  params.enc_w1.resize(h, d);
  params.enc_b1.resize(h);
  params.enc_w2.resize(dc, h);
  params.enc_b2.resize(dc);
  params.dec_w1.resize(h, dc);
  params.dec_b1.resize(h);
  params.dec_w2.resize(d, h);
  params.dec_b2.resize(d);
  ReadTensor(in, &params.enc_w1, name);
  ReadTensor(in, &params.enc_b1, name);
  ReadTensor(in, &params.enc_w2, name);
  ReadTensor(in, &params.enc_b2, name);
  ReadTensor(in, &params.dec_w1, name);
  ReadTensor(in, &params.dec_b1, name);
  ReadTensor(in, &params.dec_w2, name);
  ReadTensor(in, &params.dec_b2, name);
  for (int k : cfg.codes_per_level) {
    MatrixF cb(k, dc);
    VectorF counts(k);
    MatrixF sums(k, dc);
    ReadTensor(in, &cb, name);
    ReadTensor(in, &counts, name);
    ReadTensor(in, &sums, name);
    params.codebooks.push_back(std::move(cb));
    params.ema_counts.push_back(std::move(counts));
    params.ema_sums.push_back(std::move(sums));
  }
  if (!params.AllFinite()) Fail(ErrorKind::kNonFinite, name + ": non-finite parameter");
  *p = std::move(params);
  *c = std::move(cfg);
}

template struct BasicCodecParams<float>;
template struct BasicCodecParams<double>;
template Matrix<float> Encode<float>(const BasicCodecParams<float>&,
                                     const Eigen::Ref<const Matrix<float>>&);
template Matrix<double> Encode<double>(const BasicCodecParams<double>&,
                                       const Eigen::Ref<const Matrix<double>>&);
template Matrix<float> Decode<float>(const BasicCodecParams<float>&,
                                     const Eigen::Ref<const Matrix<float>>&);
template Matrix<double> Decode<double>(const BasicCodecParams<double>&,
                                       const Eigen::Ref<const Matrix<double>>&);
template RvqResult RvqQuantise<float>(const Eigen::Ref<const Vector<float>>&,
                                      const std::vector<Matrix<float>>&);
template RvqResult RvqQuantise<double>(const Eigen::Ref<const Vector<double>>&,
                                       const std::vector<Matrix<double>>&);
template ForwardResult<float> Forward<float>(const BasicCodecParams<float>&,
                                             const Eigen::Ref<const Matrix<float>>&,
                                             double, bool);
template ForwardResult<double> Forward<double>(
    const BasicCodecParams<double>&, const Eigen::Ref<const Matrix<double>>&,
    double, bool);

}  // namespace dsu
