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

#ifndef DSU_PROBES_H_
#define DSU_PROBES_H_

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dsu/linalg.h"

namespace dsu {

enum class ProbeTask { kPhone, kTone };
enum class ProbeKind { kRecurrent, kLogistic };

std::string_view ProbeTaskName(ProbeTask task);
std::string_view ProbeKindName(ProbeKind kind);

struct ProbeConfig {
  ProbeKind kind = ProbeKind::kRecurrent;
  int hidden_size = 128;
  double dropout = 0.3;
  // Zero picks the per-kind default (0.1 recurrent, 0.05 logistic).
  double learning_rate = 0.0;
  int batch_size = 64;
  int max_epochs = 0;  // 0: 30 recurrent, 100 logistic
  int patience = 0;    // 0: 5 recurrent, 10 logistic
  // PCA-whiten inputs with statistics of the training set.
  bool whiten = true;
  uint64_t seed = 42;

  double resolved_learning_rate() const;
  int resolved_max_epochs() const;
  int resolved_patience() const;
};

void ValidateProbeConfig(const ProbeConfig& config);

// Probe inputs: one item per vowel segment. Recurrent probes read the whole
// sequence, logistic probes expect single-row items. Labels index into the
// vocabularies held by ProbeLabels; tone -1 marks an item without a tone.
struct ProbeSet {
  std::vector<MatrixF> inputs;
  std::vector<int> phone;
  std::vector<int> tone;
  // Split the items were drawn from, -1 when unknown. Training on a set with
  // a known split is recorded by SplitAudit.
  int source_split = -1;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }
  int dim() const { return inputs.empty() ? 0 : static_cast<int>(inputs[0].cols()); }
  void Add(MatrixF input, int phone_label, int tone_label);
};

struct ProbeLabels {
  std::vector<std::string> phones;
  std::vector<std::string> tones;

  const std::vector<std::string>& names(ProbeTask task) const {
    return task == ProbeTask::kPhone ? phones : tones;
  }
};

// Index of label in a sorted vocabulary, -1 when absent.
int LabelIndex(const std::vector<std::string>& vocab, const std::string& label);

// weight_c = N / (C * count_c) over the C labels present. Warns on stderr
// when only one class is present. kInvalidArgument on an empty list.
std::map<std::string, double> ClassWeights(const std::vector<std::string>& labels);
// Same over integer labels in [0, num_classes); absent classes get 0.
// Negative labels are skipped.
std::vector<double> ClassWeights(const std::vector<int>& labels, int num_classes);

struct ClassScore {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int support = 0;
};

struct ProbeReport {
  std::string task;
  std::string representation;
  double weighted_f1 = 0.0;
  std::vector<ClassScore> per_class;
  int num_eval_segments = 0;
};

double WeightedF1(const std::vector<int>& y_true, const std::vector<int>& y_pred);

// Per-class rows for every class seen in y_true or y_pred, in label order.
// Labels outside the vocabulary are named by their index.
ProbeReport MakeReport(ProbeTask task, const std::string& representation,
                       const std::vector<int>& y_true,
                       const std::vector<int>& y_pred,
                       const std::vector<std::string>& vocab);

std::string ReportToJson(const ProbeReport& report);
// Header "task,representation,label,precision,recall,f1,support".
void WriteReportCsv(std::ostream& out, const std::vector<ProbeReport>& reports);

// x -> transform * (x - mean), with transform = diag(1/sqrt(lambda + eps)) V^T
// from the eigendecomposition of the training covariance. eps is 1e-4 of the
// largest eigenvalue.
struct Whitener {
  VectorD mean;
  MatrixD transform;

  static Whitener Fit(const ProbeSet& train);
  MatrixF Apply(const Eigen::Ref<const MatrixF>& x) const;
  ProbeSet Apply(const ProbeSet& set) const;
};

// ---------------------------------------------------------------------------
// Multinomial logistic probe.

template <typename Scalar>
struct LogisticParams {
  Matrix<Scalar> w;  // C x D
  Vector<Scalar> b;
};

// Class-weighted cross-entropy, normalised by the summed weight of the
// batch. Fills grad when non-null.
template <typename Scalar>
double LogisticLoss(const LogisticParams<Scalar>& params,
                    const Eigen::Ref<const Matrix<Scalar>>& x,
                    const std::vector<int>& labels,
                    const std::vector<double>& class_weights,
                    LogisticParams<Scalar>* grad);

std::vector<int> LogisticPredict(const LogisticParams<double>& params,
                                 const Eigen::Ref<const MatrixD>& x);

struct ProbeTrainLog {
  int epochs_run = 0;
  int best_epoch = 0;
  double best_validation_f1 = 0.0;
  std::vector<double> train_loss;
  std::vector<double> validation_f1;
};

// Items with a negative label are ignored. kDegenerate when fewer than two
// classes are present; kDivergence on a non-finite loss.
LogisticParams<double> TrainLogistic(const ProbeSet& train,
                                     const ProbeSet& validation,
                                     ProbeTask task, int num_classes,
                                     const ProbeConfig& config,
                                     ProbeTrainLog* log = nullptr);

// ---------------------------------------------------------------------------
// Recurrent probe: one LSTM layer (gate order i, f, g, o) and a linear head
// per task on the final hidden state.

template <typename Scalar>
struct RecurrentParams {
  Matrix<Scalar> w_ih;  // 4H x D
  Matrix<Scalar> w_hh;  // 4H x H
  Vector<Scalar> b;     // 4H
  Matrix<Scalar> phone_w;  // C_phone x H
  Vector<Scalar> phone_b;
  Matrix<Scalar> tone_w;   // C_tone x H
  Vector<Scalar> tone_b;

  int hidden() const { return static_cast<int>(w_hh.cols()); }
  bool AllFinite() const;

  template <typename Other>
  RecurrentParams<Other> Cast() const {
    return {w_ih.template cast<Other>(),    w_hh.template cast<Other>(),
            b.template cast<Other>(),       phone_w.template cast<Other>(),
            phone_b.template cast<Other>(), tone_w.template cast<Other>(),
            tone_b.template cast<Other>()};
  }
};

RecurrentParams<float> InitRecurrent(int input_dim, int hidden, int num_phones,
                                     int num_tones, uint64_t seed);

// Joint loss over a batch of sequences: weighted cross-entropy of the phone
// head plus that of the tone head (items with tone -1 skipped). The optional
// dropout mask (batch x H, already scaled) multiplies the final hidden state.
template <typename Scalar>
double RecurrentLoss(const RecurrentParams<Scalar>& params,
                     const std::vector<const Matrix<Scalar>*>& sequences,
                     const std::vector<int>& phone_labels,
                     const std::vector<int>& tone_labels,
                     const std::vector<double>& phone_weights,
                     const std::vector<double>& tone_weights,
                     const Matrix<Scalar>* dropout_mask,
                     RecurrentParams<Scalar>* grad);

// Logits of one head for every item, dropout off.
MatrixF RecurrentLogits(const RecurrentParams<float>& params,
                        const ProbeSet& set, ProbeTask task);
std::vector<int> RecurrentPredict(const RecurrentParams<float>& params,
                                  const ProbeSet& set, ProbeTask task);

struct RecurrentTrainResult {
  RecurrentParams<float> best_phone;  // snapshot with the best phone F1
  RecurrentParams<float> best_tone;
  ProbeTrainLog phone_log;
  ProbeTrainLog tone_log;
};

// Both heads train jointly; early stopping tracks each task separately and
// ends once neither has improved for `patience` epochs.
RecurrentTrainResult TrainRecurrent(const ProbeSet& train,
                                    const ProbeSet& validation,
                                    int num_phones, int num_tones,
                                    const ProbeConfig& config);

// ---------------------------------------------------------------------------

struct ProbeOutcome {
  ProbeReport phone;
  ProbeReport tone;
  ProbeTrainLog phone_log;
  ProbeTrainLog tone_log;
};

// Whitens (if configured), trains on train with early stopping on
// validation and reports weighted F1 on test for both tasks.
ProbeOutcome RunProbe(const ProbeSet& train, const ProbeSet& validation,
                      const ProbeSet& test, const ProbeLabels& labels,
                      const ProbeConfig& config,
                      const std::string& representation);

}  // namespace dsu

#endif  // DSU_PROBES_H_
