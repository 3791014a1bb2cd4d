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

#include "dsu/probes.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <limits>
#include <set>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "dsu/corpus.h"
#include "dsu/error.h"
#include "dsu/parallel.h"
#include "dsu/random.h"

namespace dsu {

namespace {

constexpr std::size_t kEvalChunk = 256;

template <typename Scalar>
Scalar Sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
void SoftmaxRows(Matrix<Scalar>* logits) {
  for (Eigen::Index r = 0; r < logits->rows(); ++r) {
    const Scalar m = logits->row(r).maxCoeff();
    auto row = logits->row(r);
    row = (row.array() - m).exp().matrix();
    const Scalar s = row.sum();
    row /= s;
  }
}

std::vector<int> ArgmaxRows(const MatrixF& logits) {
  std::vector<int> out(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    out[r] = static_cast<int>(best);
  }
  return out;
}

void AuditTraining(const ProbeSet& train, const ProbeSet& validation) {
  if (train.source_split >= 0) {
    SplitAudit::RecordTrainingAccess(static_cast<Split>(train.source_split));
  }
  if (validation.source_split >= 0) {
    SplitAudit::RecordTrainingAccess(static_cast<Split>(validation.source_split));
  }
}

const std::vector<int>& TaskLabels(const ProbeSet& set, ProbeTask task) {
  return task == ProbeTask::kPhone ? set.phone : set.tone;
}

// Items carrying a label for task.
std::vector<std::size_t> LabelledItems(const ProbeSet& set, ProbeTask task) {
  std::vector<std::size_t> idx;
  const std::vector<int>& labels = TaskLabels(set, task);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) idx.push_back(i);
  }
  return idx;
}

int CountClasses(const std::vector<int>& labels) {
  std::set<int> seen;
  for (int l : labels) {
    if (l >= 0) seen.insert(l);
  }
  return static_cast<int>(seen.size());
}

// F1 restricted to the labelled items of a task.
double TaskF1(const std::vector<int>& labels, const std::vector<int>& pred) {
  std::vector<int> t, p;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    t.push_back(labels[i]);
    p.push_back(pred[i]);
  }
  return t.empty() ? 0.0 : WeightedF1(t, p);
}

}  // namespace

std::string_view ProbeTaskName(ProbeTask task) {
  return task == ProbeTask::kPhone ? "phone" : "tone";
}

std::string_view ProbeKindName(ProbeKind kind) {
  return kind == ProbeKind::kRecurrent ? "recurrent" : "logistic";
}

double ProbeConfig::resolved_learning_rate() const {
  if (learning_rate > 0) return learning_rate;
  return kind == ProbeKind::kRecurrent ? 0.1 : 0.05;
}

int ProbeConfig::resolved_max_epochs() const {
  if (max_epochs > 0) return max_epochs;
  return kind == ProbeKind::kRecurrent ? 30 : 100;
}

int ProbeConfig::resolved_patience() const {
  if (patience > 0) return patience;
  return kind == ProbeKind::kRecurrent ? 5 : 10;
}

void ValidateProbeConfig(const ProbeConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) Fail(ErrorKind::kInvalidArgument, "probe config: " + msg);
  };
  require(c.hidden_size >= 1, "hidden_size must be >= 1");
  require(c.dropout >= 0 && c.dropout < 1, "dropout must be in [0, 1)");
  require(c.learning_rate >= 0, "learning_rate must be >= 0");
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(c.max_epochs >= 0 && c.patience >= 0,
          "max_epochs and patience must be >= 0");
}

void ProbeSet::Add(MatrixF input, int phone_label, int tone_label) {
  if (input.rows() == 0) Fail(ErrorKind::kDegenerate, "probe item has no frames");
  if (!inputs.empty() && input.cols() != inputs[0].cols()) {
    Fail(ErrorKind::kDimensionMismatch, "probe items differ in dimension");
  }
  inputs.push_back(std::move(input));
  phone.push_back(phone_label);
  tone.push_back(tone_label);
}

int LabelIndex(const std::vector<std::string>& vocab, const std::string& label) {
  auto it = std::lower_bound(vocab.begin(), vocab.end(), label);
  if (it == vocab.end() || *it != label) return -1;
  return static_cast<int>(it - vocab.begin());
}

std::map<std::string, double> ClassWeights(const std::vector<std::string>& labels) {
  if (labels.empty()) Fail(ErrorKind::kInvalidArgument, "class weights of no labels");
  std::map<std::string, int> counts;
  for (const auto& l : labels) ++counts[l];
  if (counts.size() == 1) {
    std::cerr << "warning: only one class present, class weighting is moot\n";
  }
  const double n = static_cast<double>(labels.size());
  const double c = static_cast<double>(counts.size());
  std::map<std::string, double> weights;
  for (const auto& [label, count] : counts) weights[label] = n / (c * count);
  return weights;
}

std::vector<double> ClassWeights(const std::vector<int>& labels, int num_classes) {
  std::vector<int> counts(num_classes, 0);
  int n = 0;
  for (int l : labels) {
    if (l < 0) continue;
    if (l >= num_classes) Fail(ErrorKind::kRange, "label outside class range");
    ++counts[l];
    ++n;
  }
  if (n == 0) Fail(ErrorKind::kInvalidArgument, "class weights of no labels");
  const int present = static_cast<int>(
      std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }));
  if (present == 1) {
    std::cerr << "warning: only one class present, class weighting is moot\n";
  }
  std::vector<double> w(num_classes, 0.0);
  for (int c = 0; c < num_classes; ++c) {
    if (counts[c] > 0) w[c] = static_cast<double>(n) / (present * static_cast<double>(counts[c]));
  }
  return w;
}

ProbeReport MakeReport(ProbeTask task, const std::string& representation,
                       const std::vector<int>& y_true,
                       const std::vector<int>& y_pred,
                       const std::vector<std::string>& vocab) {
  if (y_true.size() != y_pred.size()) {
    Fail(ErrorKind::kDimensionMismatch, "y_true and y_pred differ in length");
  }
  if (y_true.empty()) Fail(ErrorKind::kInsufficientData, "no items to score");
  std::map<int, std::array<int, 3>> tally;  // tp, predicted, support
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    tally[y_true[i]][2] += 1;
    tally[y_pred[i]][1] += 1;
    if (y_true[i] == y_pred[i]) tally[y_true[i]][0] += 1;
  }
  ProbeReport report;
  report.task = std::string(ProbeTaskName(task));
  report.representation = representation;
  report.num_eval_segments = static_cast<int>(y_true.size());
  double weighted = 0.0;
  for (const auto& [label, t] : tally) {
    ClassScore s;
    s.label = (label >= 0 && label < static_cast<int>(vocab.size()))
                  ? vocab[label]
                  : std::to_string(label);
    s.precision = t[1] > 0 ? static_cast<double>(t[0]) / t[1] : 0.0;
    s.recall = t[2] > 0 ? static_cast<double>(t[0]) / t[2] : 0.0;
    s.f1 = (s.precision + s.recall) > 0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    s.support = t[2];
    weighted += s.f1 * s.support;
    report.per_class.push_back(std::move(s));
  }
  report.weighted_f1 = weighted / static_cast<double>(y_true.size());
  return report;
}

double WeightedF1(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  return MakeReport(ProbeTask::kPhone, "", y_true, y_pred, {}).weighted_f1;
}

std::string ReportToJson(const ProbeReport& r) {
  nlohmann::json j;
  j["task"] = r.task;
  j["representation"] = r.representation;
  j["weighted_f1"] = r.weighted_f1;
  j["num_eval_segments"] = r.num_eval_segments;
  j["per_class"] = nlohmann::json::array();
  for (const ClassScore& s : r.per_class) {
    j["per_class"].push_back({{"label", s.label},
                              {"precision", s.precision},
                              {"recall", s.recall},
                              {"f1", s.f1},
                              {"support", s.support}});
  }
  return j.dump(2);
}

void WriteReportCsv(std::ostream& out, const std::vector<ProbeReport>& reports) {
  out << "task,representation,label,precision,recall,f1,support\n";
  char buf[128];
  for (const ProbeReport& r : reports) {
    for (const ClassScore& s : r.per_class) {
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%d", s.precision,
                    s.recall, s.f1, s.support);
      out << r.task << ',' << r.representation << ',' << s.label << ',' << buf
          << '\n';
    }
  }
}

// ---------------------------------------------------------------------------

Whitener Whitener::Fit(const ProbeSet& train) {
  if (train.empty()) Fail(ErrorKind::kInsufficientData, "whitening an empty set");
  const int d = train.dim();
  VectorD sum = VectorD::Zero(d);
  MatrixD outer = MatrixD::Zero(d, d);
  double n = 0;
  for (const MatrixF& x : train.inputs) {
    const MatrixD xd = x.cast<double>();
    sum += xd.colwise().sum().transpose();
    outer.noalias() += xd.transpose() * xd;
    n += static_cast<double>(x.rows());
  }
  Whitener w;
  w.mean = sum / n;
  const MatrixD cov = outer / n - w.mean * w.mean.transpose();
  Eigen::SelfAdjointEigenSolver<MatrixD> eig(cov);
  if (eig.info() != Eigen::Success) {
    Fail(ErrorKind::kDegenerate, "whitening eigendecomposition failed");
  }
  const VectorD lambda = eig.eigenvalues().cwiseMax(0.0);
  const double eps = std::max(1e-4 * lambda.maxCoeff(), 1e-12);
  const VectorD scale = (lambda.array() + eps).rsqrt().matrix();
  w.transform = scale.asDiagonal() * eig.eigenvectors().transpose();
  return w;
}

MatrixF Whitener::Apply(const Eigen::Ref<const MatrixF>& x) const {
  MatrixD centred = x.cast<double>();
  centred.rowwise() -= mean.transpose();
  return (centred * transform.transpose()).cast<float>();
}

ProbeSet Whitener::Apply(const ProbeSet& set) const {
  ProbeSet out;
  out.source_split = set.source_split;
  out.phone = set.phone;
  out.tone = set.tone;
  out.inputs.reserve(set.size());
  for (const MatrixF& x : set.inputs) out.inputs.push_back(Apply(x));
  return out;
}

// ---------------------------------------------------------------------------
// Logistic probe.

template <typename Scalar>
double LogisticLoss(const LogisticParams<Scalar>& p,
                    const Eigen::Ref<const Matrix<Scalar>>& x,
                    const std::vector<int>& labels,
                    const std::vector<double>& class_weights,
                    LogisticParams<Scalar>* grad) {
  const Eigen::Index n = x.rows();
  Matrix<Scalar> probs = x * p.w.transpose();
  probs.rowwise() += p.b.transpose();
  SoftmaxRows<Scalar>(&probs);
  double loss = 0.0, wsum = 0.0;
  Matrix<Scalar> dlogits = probs;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = class_weights[labels[i]];
    loss -= w * std::log(std::max<double>(probs(i, labels[i]),
                                          std::numeric_limits<double>::min()));
    wsum += w;
    dlogits(i, labels[i]) -= Scalar(1);
    dlogits.row(i) *= static_cast<Scalar>(w);
  }
  if (wsum <= 0) Fail(ErrorKind::kDegenerate, "batch carries no class weight");
  if (grad != nullptr) {
    dlogits /= static_cast<Scalar>(wsum);
    grad->w = dlogits.transpose() * x;
    grad->b = dlogits.colwise().sum().transpose();
  }
  return loss / wsum;
}

template double LogisticLoss<float>(const LogisticParams<float>&,
                                    const Eigen::Ref<const Matrix<float>>&,
                                    const std::vector<int>&,
                                    const std::vector<double>&,
                                    LogisticParams<float>*);
template double LogisticLoss<double>(const LogisticParams<double>&,
                                     const Eigen::Ref<const Matrix<double>>&,
                                     const std::vector<int>&,
                                     const std::vector<double>&,
                                     LogisticParams<double>*);

std::vector<int> LogisticPredict(const LogisticParams<double>& p,
                                 const Eigen::Ref<const MatrixD>& x) {
  MatrixD logits = x * p.w.transpose();
  logits.rowwise() += p.b.transpose();
  std::vector<int> out(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    out[r] = static_cast<int>(best);
  }
  return out;
}

namespace {

MatrixD StackSingleRows(const ProbeSet& set, const std::vector<std::size_t>& idx) {
  const int d = set.dim();
  MatrixD x(idx.size(), d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const MatrixF& item = set.inputs[idx[i]];
    if (item.rows() != 1) {
      Fail(ErrorKind::kInvalidArgument,
           "logistic probe expects one vector per segment");
    }
    x.row(i) = item.row(0).cast<double>();
  }
  return x;
}

std::vector<int> Pick(const std::vector<int>& labels,
                      const std::vector<std::size_t>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
  return out;
}

}  // namespace

LogisticParams<double> TrainLogistic(const ProbeSet& train,
                                     const ProbeSet& validation,
                                     ProbeTask task, int num_classes,
                                     const ProbeConfig& config,
                                     ProbeTrainLog* log) {
  ValidateProbeConfig(config);
  AuditTraining(train, validation);
  const std::vector<std::size_t> tr_idx = LabelledItems(train, task);
  const std::vector<std::size_t> va_idx = LabelledItems(validation, task);
  if (tr_idx.empty()) Fail(ErrorKind::kInsufficientData, "logistic: empty training set");
  if (va_idx.empty()) Fail(ErrorKind::kInsufficientData, "logistic: empty validation set");
  const MatrixD x = StackSingleRows(train, tr_idx);
  const std::vector<int> y = Pick(TaskLabels(train, task), tr_idx);
  const MatrixD xv = StackSingleRows(validation, va_idx);
  const std::vector<int> yv = Pick(TaskLabels(validation, task), va_idx);
  if (CountClasses(y) < 2) {
    Fail(ErrorKind::kDegenerate, "logistic: training set has a single class");
  }
  const std::vector<double> weights = ClassWeights(y, num_classes);

  LogisticParams<double> p{MatrixD::Zero(num_classes, x.cols()),
                           VectorD::Zero(num_classes)};
  LogisticParams<double> best = p;
  ProbeTrainLog local;
  ProbeTrainLog& lg = log != nullptr ? *log : local;
  lg = ProbeTrainLog{};
  lg.best_validation_f1 = -1.0;
  Rng rng(config.seed);
  const double lr = config.resolved_learning_rate();
  const int n = static_cast<int>(x.rows());
  int since_best = 0;
  LogisticParams<double> grad;
  for (int epoch = 1; epoch <= config.resolved_max_epochs(); ++epoch) {
    const std::vector<int> order = rng.Permutation(n);
    double loss_sum = 0.0;
    int batches = 0;
    for (int b = 0; b < n; b += config.batch_size) {
      const int e = std::min(n, b + config.batch_size);
      MatrixD xb(e - b, x.cols());
      std::vector<int> yb(e - b);
      for (int i = b; i < e; ++i) {
        xb.row(i - b) = x.row(order[i]);
        yb[i - b] = y[order[i]];
      }
      const double loss = LogisticLoss<double>(p, xb, yb, weights, &grad);
      if (!std::isfinite(loss)) {
        Fail(ErrorKind::kDivergence,
             "logistic probe loss is not finite at epoch " + std::to_string(epoch));
      }
      p.w -= lr * grad.w;
      p.b -= lr * grad.b;
      loss_sum += loss;
      ++batches;
    }
    const double f1 = WeightedF1(yv, LogisticPredict(p, xv));
    lg.epochs_run = epoch;
    lg.train_loss.push_back(loss_sum / batches);
    lg.validation_f1.push_back(f1);
    if (f1 > lg.best_validation_f1) {
      lg.best_validation_f1 = f1;
      lg.best_epoch = epoch;
      best = p;
      since_best = 0;
    } else if (++since_best >= config.resolved_patience()) {
      break;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Recurrent probe.

template <typename Scalar>
bool RecurrentParams<Scalar>::AllFinite() const {
  return w_ih.allFinite() && w_hh.allFinite() && b.allFinite() &&
         phone_w.allFinite() && phone_b.allFinite() && tone_w.allFinite() &&
         tone_b.allFinite();
}

template struct RecurrentParams<float>;
template struct RecurrentParams<double>;

RecurrentParams<float> InitRecurrent(int input_dim, int hidden, int num_phones,
                                     int num_tones, uint64_t seed) {
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto fill = [&](auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<float>((2.0 * rng.Uniform() - 1.0) * bound);
    }
  };
  RecurrentParams<float> p;
  p.w_ih.resize(4 * hidden, input_dim);
  p.w_hh.resize(4 * hidden, hidden);
  p.b.resize(4 * hidden);
  p.phone_w.resize(num_phones, hidden);
  p.phone_b.resize(num_phones);
  p.tone_w.resize(num_tones, hidden);
  p.tone_b.resize(num_tones);
  fill(p.w_ih);
  fill(p.w_hh);
  fill(p.b);
  fill(p.phone_w);
  fill(p.phone_b);
  fill(p.tone_w);
  fill(p.tone_b);
  return p;
}

namespace {

template <typename Scalar>
struct LstmStep {
  Matrix<Scalar> x, h_prev, c_prev, i, f, g, o, tanh_c;
  Vector<Scalar> mask;
};

// Runs the LSTM over a padded batch. Returns the final hidden state of each
// sequence; fills steps when non-null.
template <typename Scalar>
Matrix<Scalar> RunLstm(const RecurrentParams<Scalar>& p,
                       const std::vector<const Matrix<Scalar>*>& seqs,
                       std::vector<LstmStep<Scalar>>* steps) {
  const Eigen::Index bsz = static_cast<Eigen::Index>(seqs.size());
  const int h = p.hidden();
  const Eigen::Index d = p.w_ih.cols();
  Eigen::Index t_max = 0;
  for (const auto* s : seqs) {
    if (s->rows() == 0) Fail(ErrorKind::kDegenerate, "empty probe sequence");
    if (s->cols() != d) {
      Fail(ErrorKind::kDimensionMismatch, "probe sequence has the wrong dimension");
    }
    t_max = std::max(t_max, s->rows());
  }
  Matrix<Scalar> hs = Matrix<Scalar>::Zero(bsz, h);
  Matrix<Scalar> cs = Matrix<Scalar>::Zero(bsz, h);
  Matrix<Scalar> x(bsz, d);
  Vector<Scalar> mask(bsz);
  for (Eigen::Index t = 0; t < t_max; ++t) {
    for (Eigen::Index r = 0; r < bsz; ++r) {
      if (t < seqs[r]->rows()) {
        x.row(r) = seqs[r]->row(t);
        mask(r) = Scalar(1);
      } else {
        x.row(r).setZero();
        mask(r) = Scalar(0);
      }
    }
    Matrix<Scalar> a = x * p.w_ih.transpose();
    a.noalias() += hs * p.w_hh.transpose();
    a.rowwise() += p.b.transpose();
    LstmStep<Scalar> st;
    st.i = a.leftCols(h).unaryExpr([](Scalar v) { return Sigmoid(v); });
    st.f = a.middleCols(h, h).unaryExpr([](Scalar v) { return Sigmoid(v); });
    st.g = a.middleCols(2 * h, h).array().tanh().matrix();
    st.o = a.rightCols(h).unaryExpr([](Scalar v) { return Sigmoid(v); });
    const Matrix<Scalar> c_new =
        (st.f.array() * cs.array() + st.i.array() * st.g.array()).matrix();
    st.tanh_c = c_new.array().tanh().matrix();
    const Matrix<Scalar> h_new = (st.o.array() * st.tanh_c.array()).matrix();
    const auto keep = (Scalar(1) - mask.array());
    Matrix<Scalar> c_next = (c_new.array().colwise() * mask.array() +
                             cs.array().colwise() * keep).matrix();
    Matrix<Scalar> h_next = (h_new.array().colwise() * mask.array() +
                             hs.array().colwise() * keep).matrix();
    if (steps != nullptr) {
      st.x = x;
      st.h_prev = std::move(hs);
      st.c_prev = std::move(cs);
      st.mask = mask;
      steps->push_back(std::move(st));
    }
    hs = std::move(h_next);
    cs = std::move(c_next);
  }
  return hs;
}

// Weighted cross-entropy of one head on the labelled rows. Adds the logit
// gradient into dlogits when non-null.
template <typename Scalar>
double HeadLoss(const Matrix<Scalar>& logits, const std::vector<int>& labels,
                const std::vector<double>& weights, Matrix<Scalar>* dlogits) {
  Matrix<Scalar> probs = logits;
  SoftmaxRows<Scalar>(&probs);
  double loss = 0.0, wsum = 0.0;
  if (dlogits != nullptr) dlogits->setZero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (labels[i] < 0) continue;
    const double w = weights[labels[i]];
    loss -= w * std::log(std::max<double>(probs(i, labels[i]),
                                          std::numeric_limits<double>::min()));
    wsum += w;
    if (dlogits != nullptr) {
      dlogits->row(i) = probs.row(i) * static_cast<Scalar>(w);
      (*dlogits)(i, labels[i]) -= static_cast<Scalar>(w);
    }
  }
  if (wsum <= 0) return 0.0;
  if (dlogits != nullptr) *dlogits /= static_cast<Scalar>(wsum);
  return loss / wsum;
}

}  // namespace

template <typename Scalar>
double RecurrentLoss(const RecurrentParams<Scalar>& p,
                     const std::vector<const Matrix<Scalar>*>& seqs,
                     const std::vector<int>& phone_labels,
                     const std::vector<int>& tone_labels,
                     const std::vector<double>& phone_weights,
                     const std::vector<double>& tone_weights,
                     const Matrix<Scalar>* dropout_mask,
                     RecurrentParams<Scalar>* grad) {
  const int h = p.hidden();
  std::vector<LstmStep<Scalar>> steps;
  const Matrix<Scalar> h_final = RunLstm<Scalar>(p, seqs, grad ? &steps : nullptr);
  const Matrix<Scalar> hd = dropout_mask != nullptr
                                ? Matrix<Scalar>(h_final.cwiseProduct(*dropout_mask))
                                : h_final;
  Matrix<Scalar> lp = hd * p.phone_w.transpose();
  lp.rowwise() += p.phone_b.transpose();
  Matrix<Scalar> lt = hd * p.tone_w.transpose();
  lt.rowwise() += p.tone_b.transpose();
  Matrix<Scalar> dlp, dlt;
  const double loss =
      HeadLoss<Scalar>(lp, phone_labels, phone_weights, grad ? &dlp : nullptr) +
      HeadLoss<Scalar>(lt, tone_labels, tone_weights, grad ? &dlt : nullptr);
  if (grad == nullptr) return loss;

  grad->phone_w = dlp.transpose() * hd;
  grad->phone_b = dlp.colwise().sum().transpose();
  grad->tone_w = dlt.transpose() * hd;
  grad->tone_b = dlt.colwise().sum().transpose();
  Matrix<Scalar> dh = dlp * p.phone_w + dlt * p.tone_w;
  if (dropout_mask != nullptr) dh = dh.cwiseProduct(*dropout_mask);
  Matrix<Scalar> dc = Matrix<Scalar>::Zero(dh.rows(), h);
  grad->w_ih = Matrix<Scalar>::Zero(p.w_ih.rows(), p.w_ih.cols());
  grad->w_hh = Matrix<Scalar>::Zero(p.w_hh.rows(), p.w_hh.cols());
  grad->b = Vector<Scalar>::Zero(p.b.size());
  Matrix<Scalar> da(dh.rows(), 4 * h);
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
    const LstmStep<Scalar>& st = *it;
    const auto m = st.mask.array();
    const auto keep = Scalar(1) - m;
    const Matrix<Scalar> dh_new = (dh.array().colwise() * m).matrix();
    const Matrix<Scalar> dh_carry = (dh.array().colwise() * keep).matrix();
    Matrix<Scalar> dc_new = (dc.array().colwise() * m).matrix();
    const Matrix<Scalar> dc_carry = (dc.array().colwise() * keep).matrix();
    const auto tc = st.tanh_c.array();
    dc_new.array() += dh_new.array() * st.o.array() * (Scalar(1) - tc * tc);
    const auto i = st.i.array();
    const auto f = st.f.array();
    const auto g = st.g.array();
    const auto o = st.o.array();
    da.leftCols(h) = (dc_new.array() * g * i * (Scalar(1) - i)).matrix();
    da.middleCols(h, h) =
        (dc_new.array() * st.c_prev.array() * f * (Scalar(1) - f)).matrix();
    da.middleCols(2 * h, h) = (dc_new.array() * i * (Scalar(1) - g * g)).matrix();
    da.rightCols(h) = (dh_new.array() * tc * o * (Scalar(1) - o)).matrix();
    grad->w_ih.noalias() += da.transpose() * st.x;
    grad->w_hh.noalias() += da.transpose() * st.h_prev;
    grad->b += da.colwise().sum().transpose();
    dh = da * p.w_hh + dh_carry;
    dc = (dc_new.array() * f).matrix() + dc_carry;
  }
  return loss;
}

template double RecurrentLoss<float>(
    const RecurrentParams<float>&, const std::vector<const Matrix<float>*>&,
    const std::vector<int>&, const std::vector<int>&,
    const std::vector<double>&, const std::vector<double>&,
    const Matrix<float>*, RecurrentParams<float>*);
template double RecurrentLoss<double>(
    const RecurrentParams<double>&, const std::vector<const Matrix<double>*>&,
    const std::vector<int>&, const std::vector<int>&,
    const std::vector<double>&, const std::vector<double>&,
    const Matrix<double>*, RecurrentParams<double>*);

MatrixF RecurrentLogits(const RecurrentParams<float>& p, const ProbeSet& set,
                        ProbeTask task) {
  if (set.empty()) Fail(ErrorKind::kInsufficientData, "no items to evaluate");
  const MatrixF& w = task == ProbeTask::kPhone ? p.phone_w : p.tone_w;
  const VectorF& b = task == ProbeTask::kPhone ? p.phone_b : p.tone_b;
  MatrixF logits(set.size(), w.rows());
  ParallelForChunks(set.size(), kEvalChunk, DefaultWorkerCount(),
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                      std::vector<const MatrixF*> seqs;
                      for (std::size_t i = begin; i < end; ++i) {
                        seqs.push_back(&set.inputs[i]);
                      }
                      const MatrixF h = RunLstm<float>(p, seqs, nullptr);
                      MatrixF l = h * w.transpose();
                      l.rowwise() += b.transpose();
                      logits.middleRows(begin, end - begin) = l;
                    });
  return logits;
}

std::vector<int> RecurrentPredict(const RecurrentParams<float>& p,
                                  const ProbeSet& set, ProbeTask task) {
  return ArgmaxRows(RecurrentLogits(p, set, task));
}

RecurrentTrainResult TrainRecurrent(const ProbeSet& train,
                                    const ProbeSet& validation, int num_phones,
                                    int num_tones, const ProbeConfig& config) {
  ValidateProbeConfig(config);
  if (train.empty()) Fail(ErrorKind::kInsufficientData, "recurrent: empty training set");
  if (validation.empty()) {
    Fail(ErrorKind::kInsufficientData, "recurrent: empty validation set");
  }
  AuditTraining(train, validation);
  const bool has_tone = CountClasses(train.tone) > 0;
  if (CountClasses(train.phone) < 2 && CountClasses(train.tone) < 2) {
    Fail(ErrorKind::kDegenerate, "recurrent: training set has a single class");
  }
  const std::vector<double> phone_w = ClassWeights(train.phone, num_phones);
  const std::vector<double> tone_w =
      has_tone ? ClassWeights(train.tone, num_tones)
               : std::vector<double>(num_tones, 0.0);
  const int hidden = config.hidden_size;
  RecurrentParams<float> p = InitRecurrent(train.dim(), hidden, num_phones,
                                           num_tones, DeriveSeed(config.seed, 1));
  RecurrentTrainResult result;
  result.best_phone = p;
  result.best_tone = p;
  result.phone_log.best_validation_f1 = -1.0;
  result.tone_log.best_validation_f1 = -1.0;
  Rng rng(config.seed);
  const float lr = static_cast<float>(config.resolved_learning_rate());
  const double keep = 1.0 - config.dropout;
  const int n = static_cast<int>(train.size());
  int since_best = 0;
  RecurrentParams<float> grad;
  for (int epoch = 1; epoch <= config.resolved_max_epochs(); ++epoch) {
    const std::vector<int> order = rng.Permutation(n);
    double loss_sum = 0.0;
    int batches = 0;
    for (int b = 0; b < n; b += config.batch_size) {
      const int e = std::min(n, b + config.batch_size);
      std::vector<const MatrixF*> seqs;
      std::vector<int> yp, yt;
      for (int i = b; i < e; ++i) {
        seqs.push_back(&train.inputs[order[i]]);
        yp.push_back(train.phone[order[i]]);
        yt.push_back(train.tone[order[i]]);
      }
      MatrixF mask(e - b, hidden);
      for (Eigen::Index k = 0; k < mask.size(); ++k) {
        mask.data()[k] = rng.Uniform() < keep ? static_cast<float>(1.0 / keep) : 0.0f;
      }
      const double loss =
          RecurrentLoss<float>(p, seqs, yp, yt, phone_w, tone_w, &mask, &grad);
      if (!std::isfinite(loss)) {
        Fail(ErrorKind::kDivergence,
             "recurrent probe loss is not finite at epoch " + std::to_string(epoch));
      }
      p.w_ih -= lr * grad.w_ih;
      p.w_hh -= lr * grad.w_hh;
      p.b -= lr * grad.b;
      p.phone_w -= lr * grad.phone_w;
      p.phone_b -= lr * grad.phone_b;
      p.tone_w -= lr * grad.tone_w;
      p.tone_b -= lr * grad.tone_b;
      loss_sum += loss;
      ++batches;
    }
    if (!p.AllFinite()) {
      Fail(ErrorKind::kDivergence, "recurrent probe weights are not finite");
    }
    bool improved = false;
    for (ProbeTask task : {ProbeTask::kPhone, ProbeTask::kTone}) {
      if (task == ProbeTask::kTone && !has_tone) continue;
      ProbeTrainLog& lg = task == ProbeTask::kPhone ? result.phone_log : result.tone_log;
      const double f1 = TaskF1(TaskLabels(validation, task),
                               RecurrentPredict(p, validation, task));
      lg.epochs_run = epoch;
      lg.train_loss.push_back(loss_sum / batches);
      lg.validation_f1.push_back(f1);
      if (f1 > lg.best_validation_f1) {
        lg.best_validation_f1 = f1;
        lg.best_epoch = epoch;
        (task == ProbeTask::kPhone ? result.best_phone : result.best_tone) = p;
        improved = true;
      }
    }
    since_best = improved ? 0 : since_best + 1;
    if (since_best >= config.resolved_patience()) break;
  }
  return result;
}

// ---------------------------------------------------------------------------

ProbeOutcome RunProbe(const ProbeSet& train_in, const ProbeSet& val_in,
                      const ProbeSet& test_in, const ProbeLabels& labels,
                      const ProbeConfig& config,
                      const std::string& representation) {
  ValidateProbeConfig(config);
  if (test_in.empty()) Fail(ErrorKind::kInsufficientData, "probe test set is empty");
  ProbeSet train, val, test;
  if (config.whiten) {
    const Whitener w = Whitener::Fit(train_in);
    train = w.Apply(train_in);
    val = w.Apply(val_in);
    test = w.Apply(test_in);
  } else {
    train = train_in;
    val = val_in;
    test = test_in;
  }
  const int num_phones = static_cast<int>(labels.phones.size());
  const int num_tones = static_cast<int>(labels.tones.size());
  ProbeOutcome out;
  auto report = [&](ProbeTask task, const std::vector<int>& pred) {
    const std::vector<int>& truth = TaskLabels(test, task);
    std::vector<int> t, p;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] < 0) continue;
      t.push_back(truth[i]);
      p.push_back(pred[i]);
    }
    return MakeReport(task, representation, t, p, labels.names(task));
  };
  if (config.kind == ProbeKind::kRecurrent) {
    const RecurrentTrainResult r =
        TrainRecurrent(train, val, num_phones, num_tones, config);
    out.phone_log = r.phone_log;
    out.tone_log = r.tone_log;
    out.phone = report(ProbeTask::kPhone,
                       RecurrentPredict(r.best_phone, test, ProbeTask::kPhone));
    out.tone = report(ProbeTask::kTone,
                      RecurrentPredict(r.best_tone, test, ProbeTask::kTone));
    return out;
  }
  std::vector<std::size_t> all(test.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const MatrixD xt = StackSingleRows(test, all);
  for (ProbeTask task : {ProbeTask::kPhone, ProbeTask::kTone}) {
    const int classes = task == ProbeTask::kPhone ? num_phones : num_tones;
    ProbeTrainLog lg;
    const LogisticParams<double> p =
        TrainLogistic(train, val, task, classes, config, &lg);
    const ProbeReport rep = report(task, LogisticPredict(p, xt));
    (task == ProbeTask::kPhone ? out.phone : out.tone) = rep;
    (task == ProbeTask::kPhone ? out.phone_log : out.tone_log) = lg;
  }
  return out;
}

}  // namespace dsu
