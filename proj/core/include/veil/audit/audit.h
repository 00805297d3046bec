// Copyright 2026 The Veil Authors
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

#ifndef VEIL_AUDIT_AUDIT_H_
#define VEIL_AUDIT_AUDIT_H_

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "veil/common/rng.h"
#include "veil/dataio/dataset.h"
#include "veil/guidance/guidance.h"
#include "veil/nn/checkpoint.h"
#include "veil/nn/layers.h"

namespace veil::audit {

using nn::Matrix;

// ---- Evaluation classifiers --------------------------------------------------

struct EvalClassifierConfig {
  int channels = 2;
  int window_len = 128;
  std::vector<int> conv_channels = {16, 32, 32, 32};  // kernel 3, same padding
  std::vector<int> conv_strides = {1, 2, 2, 2};
  std::vector<int> fc_widths = {64, 32};  // followed by the class layer
  int classes = 2;

  void Validate() const;
};

// 4 conv + 3 FC network producing class logits.
template <typename T>
class EvalClassifier final : public nn::Module<T> {
 public:
  EvalClassifier(const EvalClassifierConfig& config, Rng& rng);

  const EvalClassifierConfig& config() const { return config_; }
  Matrix<T> Logits(const Matrix<T>& x) const;
  Matrix<T> LogProb(const Matrix<T>& x) const;
  // Argmax with ties broken toward the lowest class index.
  std::vector<int> Predict(const Matrix<T>& x) const;

  nn::Sequential<T>& net() { return net_; }
  void CollectParameters(const std::string& prefix, nn::ParameterList<T>& out) override {
    net_.CollectParameters(prefix, out);
  }

 private:
  EvalClassifierConfig config_;
  nn::Sequential<T> net_;
};

struct EvalTrainConfig {
  int epochs = 15;
  int batch_size = 64;
  double lr = 1e-3;
  uint64_t seed = 21;
};

enum class TrainedOn { kRaw, kObfuscated };

struct TrainedClassifier {
  EvalClassifier<float> model;
  std::string attribute;
  TrainedOn trained_on = TrainedOn::kRaw;
  std::vector<double> loss_history;
  double held_out_accuracy = -1.0;  // < 0 when no held-out set was given
};

// Cross-entropy with Adam on (features, attribute labels) of `train`.
// Error(kValidation) when the attribute has fewer than 2 observed classes.
TrainedClassifier TrainEvalClassifier(const dataio::Dataset& train, const std::string& attribute,
                                      const EvalTrainConfig& config,
                                      const dataio::Dataset* held_out = nullptr,
                                      TrainedOn trained_on = TrainedOn::kRaw);

inline constexpr const char* kEvalKind = "eval";
nn::Checkpoint EvalToCheckpoint(const TrainedClassifier& classifier);
TrainedClassifier EvalFromCheckpoint(const nn::Checkpoint& ckpt);

// ---- Metrics -----------------------------------------------------------------

// |accuracy - 1 / cardinality|. Error(kValidation) for cardinality < 2.
double PrivacyLoss(double accuracy, int cardinality);
double Accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);
// Unweighted mean of per-class F1 over classes in [0, classes); a class that
// never occurs in either vector is skipped.
double MacroF1(const std::vector<int>& predicted, const std::vector<int>& truth, int classes);

struct AttributeMetrics {
  std::string attribute;
  dataio::AttributeRole role = dataio::AttributeRole::kPrivate;
  int cardinality = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double privacy_loss = 0.0;  // for private / unspecified attributes
};

struct EvalReport {
  std::vector<AttributeMetrics> attributes;
  size_t segments = 0;
  double seconds_per_segment = 0.0;
  // Free-form JSON object with run context (guidance spec, seeds, digests).
  std::string context_json = "{}";

  const AttributeMetrics& Get(const std::string& attribute) const;
};

// Metrics for every attribute that has a classifier. Error(kSchema) when a
// classifier's attribute is missing from the dataset schema.
EvalReport Evaluate(const dataio::Dataset& data,
                    const std::map<std::string, const TrainedClassifier*>& classifiers);

// UTF-8 JSON with tool and format versions.
std::string ReportToJson(const EvalReport& report);

// Trains a fresh classifier on (obfuscated train, true private labels) with
// `config` and returns its accuracy on `obf_test`.
double ReidentificationAttack(const dataio::Dataset& obf_train, const dataio::Dataset& obf_test,
                              const std::string& private_attribute,
                              const EvalTrainConfig& config);

// ---- Mutual information --------------------------------------------------------

struct MineConfig {
  int hidden = 128;  // 3 FC layers: in -> hidden -> hidden -> 1
  int steps = 600;
  int batch_size = 128;
  double lr = 1e-3;
  double ema_decay = 0.01;       // weight of the newest batch in the EMA
  double holdout_fraction = 0.2;  // bound evaluated on held-out pairs
  int eval_permutations = 8;      // marginal shufflings per evaluation
  int eval_points = 5;            // evaluations averaged over the last quarter

  void Validate() const;
  uint64_t seed = 31;
};

struct MineResult {
  double mi_nats = 0.0;    // smoothed held-out bound, clamped at 0
  double raw_bound = 0.0;  // before clamping
  std::vector<double> train_bound;  // per-step minibatch bound
};

// Statistics network: in -> hidden -> hidden -> 1 with SiLU between.
template <typename T>
nn::Sequential<T> MakeStatisticsNetwork(int in_dim, int hidden, Rng& rng);

struct DvTerms {
  double bound = 0.0;  // mean(t_joint) - log mean(exp(t_marg))
  // Gradient of -bound, with mean(exp(t_marg)) in the log term's derivative
  // replaced by `denominator` (the moving average during training).
  Eigen::RowVectorXd d_joint;
  Eigen::RowVectorXd d_marg;
};
DvTerms DonskerVaradhan(const Eigen::RowVectorXd& t_joint, const Eigen::RowVectorXd& t_marg,
                        double denominator);

// Smallest paired sample MINE accepts; 20% of it is held out for the bound.
inline constexpr int kMinMinePairs = 100;

// Donsker-Varadhan bound E_joint[T] - log E_marg[e^T] with shuffled-pair
// marginals. `a` and `b` are (dims x N) with paired columns; inputs are
// standardized per dimension. Error(kValidation) when N < kMinMinePairs.
MineResult MineEstimate(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                        const MineConfig& config);

// One-hot encoding (classes x N) with N(0, noise^2) jitter.
Eigen::MatrixXd OneHot(const std::vector<int>& labels, int classes, double noise, Rng& rng);

struct MiPoint {
  int epoch = 0;
  std::string attribute;
  double mi_nats = 0.0;
};

// MI(z_U; attribute) for every snapshot and attribute. Labels are paired
// with snapshot columns. Error(kValidation) when `snapshots` is empty.
std::vector<MiPoint> DisentanglementAudit(
    const std::vector<Matrix<float>>& snapshots,
    const std::map<std::string, std::pair<std::vector<int>, int>>& labels_and_cardinality,
    const MineConfig& config);

// CSV `epoch,attribute,mi_nats`.
std::string MiCurveCsv(const std::vector<MiPoint>& points);

// ---- Trade-off sweep ----------------------------------------------------------

struct SweepRow {
  double w_u = 0.0;
  double w_s = 0.0;
  double utility_acc = 0.0;
  double utility_f1 = 0.0;
  double intrusive_acc = 0.0;
  double privacy_loss = 0.0;
};

struct SweepInputs {
  const guidance::Bundle* bundle = nullptr;
  const dataio::Dataset* eval_set = nullptr;
  const TrainedClassifier* utility = nullptr;    // desired classifier on U
  const TrainedClassifier* intrusive = nullptr;  // intrusive classifier on S
  std::string private_attribute;
  guidance::ObfuscateOptions options;
  // Content digest of the frozen components; must not change during the sweep.
  std::function<std::string()> digest;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // row-major over (w_u, w_s)
  std::string digest_before;
  std::string digest_after;
  bool digests_constant = true;
};

SweepResult TradeoffSweep(const std::vector<double>& w_u_grid, const std::vector<double>& w_s_grid,
                          const SweepInputs& inputs);

// CSV `w_u,w_s,utility_acc,utility_f1,intrusive_acc,privacy_loss`.
std::string SweepCsv(const std::vector<SweepRow>& rows);

}  // namespace veil::audit

#endif  // VEIL_AUDIT_AUDIT_H_
