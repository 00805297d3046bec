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

#include "veil/audit/audit.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "veil/common/error.h"
#include "veil/common/version.h"
#include "veil/nn/functional.h"
#include "veil/nn/optimizer.h"

namespace veil::audit {

void EvalClassifierConfig::Validate() const {
  Require(channels >= 1 && window_len >= 1, ErrorCode::kConfig, "eval classifier input invalid");
  Require(!conv_channels.empty() && conv_channels.size() == conv_strides.size(),
          ErrorCode::kConfig, "eval classifier conv channels/strides mismatch");
  for (int s : conv_strides) Require(s >= 1, ErrorCode::kConfig, "conv stride must be >= 1");
  Require(classes >= 2, ErrorCode::kConfig, "eval classifier needs >= 2 classes");
}

template <typename T>
EvalClassifier<T>::EvalClassifier(const EvalClassifierConfig& config, Rng& rng)
    : config_(config) {
  config.Validate();
  int c = config.channels;
  int len = config.window_len;
  for (size_t i = 0; i < config.conv_channels.size(); ++i) {
    nn::Conv1dShape s{.in_channels = c, .out_channels = config.conv_channels[i], .kernel = 3,
                      .stride = config.conv_strides[i], .padding = nn::Padding::kSame,
                      .in_length = len};
    net_.template Add<nn::Conv1d<T>>(s, rng);
    net_.template Add<nn::SiLU<T>>();
    c = s.out_channels;
    len = s.out_length();
  }
  int width = c * len;
  for (int w : config.fc_widths) {
    net_.template Add<nn::Dense<T>>(width, w, rng);
    net_.template Add<nn::SiLU<T>>();
    width = w;
  }
  net_.template Add<nn::Dense<T>>(width, config.classes, rng);
}

template <typename T>
Matrix<T> EvalClassifier<T>::Logits(const Matrix<T>& x) const {
  Require(x.rows() == config_.channels * config_.window_len, ErrorCode::kShape,
          "eval classifier: input has the wrong feature size");
  return net_.Infer(x);
}

template <typename T>
Matrix<T> EvalClassifier<T>::LogProb(const Matrix<T>& x) const {
  return nn::LogSoftmax(Logits(x));
}

template <typename T>
std::vector<int> EvalClassifier<T>::Predict(const Matrix<T>& x) const {
  return nn::ArgMax(Logits(x));
}

template class EvalClassifier<float>;
template class EvalClassifier<double>;

namespace {

Matrix<float> Columns(const Eigen::MatrixXf& x, std::span<const int> idx) {
  Matrix<float> out(x.rows(), static_cast<Eigen::Index>(idx.size()));
  for (size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.col(idx[j]);
  return out;
}

const char* TrainedOnName(TrainedOn t) { return t == TrainedOn::kRaw ? "raw" : "obfuscated"; }

const char* RoleName(dataio::AttributeRole r) {
  switch (r) {
    case dataio::AttributeRole::kPublic:
      return "public";
    case dataio::AttributeRole::kPrivate:
      return "private";
    case dataio::AttributeRole::kUnspecified:
      return "unspecified";
  }
  return "unknown";
}

}  // namespace

TrainedClassifier TrainEvalClassifier(const dataio::Dataset& train, const std::string& attribute,
                                      const EvalTrainConfig& config,
                                      const dataio::Dataset* held_out, TrainedOn trained_on) {
  Require(config.epochs >= 0 && config.batch_size >= 1 && config.lr > 0.0, ErrorCode::kConfig,
          "eval classifier training config invalid");
  const auto& spec = train.schema.Get(attribute);
  const std::vector<int> labels = train.Labels(attribute);
  Require(std::set<int>(labels.begin(), labels.end()).size() >= 2, ErrorCode::kValidation,
          "attribute '" + attribute + "' has fewer than 2 observed classes");

  EvalClassifierConfig mc;
  mc.channels = train.channels;
  mc.window_len = train.window_len;
  mc.classes = static_cast<int>(spec.cardinality);
  Rng rng(config.seed);
  TrainedClassifier out{EvalClassifier<float>(mc, rng), attribute, trained_on, {}, -1.0};

  const Eigen::MatrixXf x = train.Features();
  const int n = static_cast<int>(x.cols());
  nn::Optimizer<float> opt(nn::OptimizerConfig{.kind = nn::OptimizerKind::kAdam, .lr = config.lr});
  auto& net = out.model.net();
  auto params = out.model.Parameters();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<int> order = rng.Permutation(n);
    for (int start = 0; start < n; start += config.batch_size) {
      const int b = std::min(config.batch_size, n - start);
      const std::span<const int> idx(order.data() + start, static_cast<size_t>(b));
      std::vector<int> y(static_cast<size_t>(b));
      for (int j = 0; j < b; ++j) y[static_cast<size_t>(j)] = labels[static_cast<size_t>(idx[j])];
      out.model.ZeroGrad();
      const Matrix<float> logits = net.Forward(Columns(x, idx));
      Matrix<float> dlogits;
      const auto loss = nn::SoftmaxCrossEntropy<float>(logits, y, &dlogits);
      if (!std::isfinite(loss.loss)) Fail(ErrorCode::kNumeric, "eval classifier loss diverged");
      net.Backward(dlogits);
      opt.Step(params);
      out.loss_history.push_back(loss.loss);
    }
  }
  if (held_out != nullptr) {
    out.held_out_accuracy =
        Accuracy(out.model.Predict(held_out->Features()), held_out->Labels(attribute));
  }
  return out;
}

nn::Checkpoint EvalToCheckpoint(const TrainedClassifier& classifier) {
  const auto& c = classifier.model.config();
  nlohmann::json meta = {{"tool_version", kToolVersion},
                         {"attribute", classifier.attribute},
                         {"trained_on", TrainedOnName(classifier.trained_on)},
                         {"channels", c.channels},
                         {"window_len", c.window_len},
                         {"conv_channels", c.conv_channels},
                         {"conv_strides", c.conv_strides},
                         {"fc_widths", c.fc_widths},
                         {"classes", c.classes},
                         {"held_out_accuracy", classifier.held_out_accuracy}};
  nn::Checkpoint ckpt;
  ckpt.kind = kEvalKind;
  ckpt.metadata = meta.dump();
  ckpt.tensors = nn::CaptureParameters(classifier.model);
  return ckpt;
}

TrainedClassifier EvalFromCheckpoint(const nn::Checkpoint& ckpt) {
  Require(ckpt.kind == kEvalKind, ErrorCode::kConfig, "checkpoint is not an eval classifier");
  EvalClassifierConfig c;
  std::string attribute;
  TrainedOn trained_on = TrainedOn::kRaw;
  double held_out = -1.0;
  try {
    const auto meta = nlohmann::json::parse(ckpt.metadata);
    attribute = meta.at("attribute").get<std::string>();
    trained_on = meta.at("trained_on").get<std::string>() == "raw" ? TrainedOn::kRaw
                                                                   : TrainedOn::kObfuscated;
    c.channels = meta.at("channels").get<int>();
    c.window_len = meta.at("window_len").get<int>();
    c.conv_channels = meta.at("conv_channels").get<std::vector<int>>();
    c.conv_strides = meta.at("conv_strides").get<std::vector<int>>();
    c.fc_widths = meta.at("fc_widths").get<std::vector<int>>();
    c.classes = meta.at("classes").get<int>();
    held_out = meta.at("held_out_accuracy").get<double>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kFormat, std::string("eval checkpoint metadata: ") + e.what());
  }
  Rng rng(0);
  TrainedClassifier out{EvalClassifier<float>(c, rng), attribute, trained_on, {}, held_out};
  nn::RestoreParameters(ckpt.tensors, out.model);
  return out;
}

// ---- Metrics -----------------------------------------------------------------

double PrivacyLoss(double accuracy, int cardinality) {
  Require(cardinality >= 2, ErrorCode::kValidation, "privacy loss needs cardinality >= 2");
  return std::abs(accuracy - 1.0 / cardinality);
}

double Accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  Require(predicted.size() == truth.size() && !truth.empty(), ErrorCode::kShape,
          "accuracy: predictions and labels differ in size");
  size_t hit = 0;
  for (size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double MacroF1(const std::vector<int>& predicted, const std::vector<int>& truth, int classes) {
  Require(predicted.size() == truth.size() && !truth.empty(), ErrorCode::kShape,
          "macro F1: predictions and labels differ in size");
  std::vector<int> tp(static_cast<size_t>(classes)), fp(tp), fn(tp);
  for (size_t i = 0; i < truth.size(); ++i) {
    const int p = predicted[i], t = truth[i];
    Require(p >= 0 && p < classes && t >= 0 && t < classes, ErrorCode::kValidation,
            "macro F1: label out of range");
    if (p == t) {
      ++tp[static_cast<size_t>(t)];
    } else {
      ++fp[static_cast<size_t>(p)];
      ++fn[static_cast<size_t>(t)];
    }
  }
  double sum = 0.0;
  int counted = 0;
  for (size_t c = 0; c < tp.size(); ++c) {
    const int denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom == 0) continue;
    sum += 2.0 * tp[c] / denom;
    ++counted;
  }
  return counted > 0 ? sum / counted : 0.0;
}

const AttributeMetrics& EvalReport::Get(const std::string& attribute) const {
  for (const auto& a : attributes) {
    if (a.attribute == attribute) return a;
  }
  Fail(ErrorCode::kSchema, "report has no attribute '" + attribute + "'");
}

EvalReport Evaluate(const dataio::Dataset& data,
                    const std::map<std::string, const TrainedClassifier*>& classifiers) {
  EvalReport report;
  report.segments = data.size();
  const Eigen::MatrixXf x = data.Features();
  for (const auto& [name, clf] : classifiers) {
    Require(clf != nullptr, ErrorCode::kConfig, "null classifier for '" + name + "'");
    const auto& spec = data.schema.Get(name);
    const std::vector<int> truth = data.Labels(name);
    const std::vector<int> pred = clf->model.Predict(x);
    AttributeMetrics m;
    m.attribute = name;
    m.role = spec.role;
    m.cardinality = static_cast<int>(spec.cardinality);
    m.accuracy = Accuracy(pred, truth);
    m.macro_f1 = MacroF1(pred, truth, m.cardinality);
    m.privacy_loss = PrivacyLoss(m.accuracy, m.cardinality);
    report.attributes.push_back(m);
  }
  return report;
}

std::string ReportToJson(const EvalReport& report) {
  nlohmann::json attrs = nlohmann::json::array();
  for (const auto& a : report.attributes) {
    nlohmann::json j = {{"attribute", a.attribute},   {"role", RoleName(a.role)},
                        {"cardinality", a.cardinality}, {"accuracy", a.accuracy},
                        {"macro_f1", a.macro_f1}};
    if (a.role != dataio::AttributeRole::kPublic) j["privacy_loss"] = a.privacy_loss;
    attrs.push_back(j);
  }
  nlohmann::json context;
  try {
    context = nlohmann::json::parse(report.context_json);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kFormat, std::string("report context is not JSON: ") + e.what());
  }
  const nlohmann::json doc = {{"format", "veil.eval_report"},
                              {"format_version", 1},
                              {"tool_version", kToolVersion},
                              {"f1_average", "macro"},
                              {"segments", report.segments},
                              {"seconds_per_segment", report.seconds_per_segment},
                              {"attributes", attrs},
                              {"context", context}};
  return doc.dump(2) + "\n";
}

double ReidentificationAttack(const dataio::Dataset& obf_train, const dataio::Dataset& obf_test,
                              const std::string& private_attribute,
                              const EvalTrainConfig& config) {
  return TrainEvalClassifier(obf_train, private_attribute, config, &obf_test,
                             TrainedOn::kObfuscated)
      .held_out_accuracy;
}

// ---- Mutual information --------------------------------------------------------

void MineConfig::Validate() const {
  Require(hidden >= 1 && steps >= 1 && batch_size >= 2 && lr > 0.0, ErrorCode::kConfig,
          "MINE config invalid");
  Require(ema_decay > 0.0 && ema_decay <= 1.0, ErrorCode::kConfig, "MINE EMA decay in (0, 1]");
  Require(holdout_fraction > 0.0 && holdout_fraction < 1.0, ErrorCode::kConfig,
          "MINE holdout fraction in (0, 1)");
  Require(eval_permutations >= 1 && eval_points >= 1, ErrorCode::kConfig,
          "MINE evaluation counts must be >= 1");
}

namespace {

Eigen::MatrixXf StandardizeRows(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mean = m.row(r).mean();
    const double var = (m.row(r).array() - mean).square().mean();
    const double sd = var > 1e-24 ? std::sqrt(var) : 1.0;
    out.row(r) = (m.row(r).array() - mean) / sd;
  }
  return out.cast<float>();
}

// Pairs column idx_a[j] of `a` with column idx_b[j] of `b`.
Matrix<float> Pair(const Eigen::MatrixXf& a, const Eigen::MatrixXf& b,
                   std::span<const int> idx_a, std::span<const int> idx_b) {
  Matrix<float> x(a.rows() + b.rows(), static_cast<Eigen::Index>(idx_a.size()));
  for (size_t j = 0; j < idx_a.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    x.col(c).head(a.rows()) = a.col(idx_a[j]);
    x.col(c).tail(b.rows()) = b.col(idx_b[j]);
  }
  return x;
}

// log mean exp over a row vector, in double.
double LogMeanExp(const Eigen::RowVectorXd& t) {
  const double m = t.maxCoeff();
  return m + std::log((t.array() - m).exp().mean());
}

}  // namespace

template <typename T>
nn::Sequential<T> MakeStatisticsNetwork(int in_dim, int hidden, Rng& rng) {
  return nn::MakeMlp<T>({in_dim, hidden, hidden, 1}, rng);
}

template nn::Sequential<float> MakeStatisticsNetwork<float>(int, int, Rng&);
template nn::Sequential<double> MakeStatisticsNetwork<double>(int, int, Rng&);

DvTerms DonskerVaradhan(const Eigen::RowVectorXd& t_joint, const Eigen::RowVectorXd& t_marg,
                        double denominator) {
  Require(t_joint.size() > 0 && t_marg.size() > 0, ErrorCode::kShape, "DV bound: empty batch");
  Require(denominator > 0.0, ErrorCode::kNumeric, "DV bound: non-positive denominator");
  DvTerms r;
  r.bound = t_joint.mean() - LogMeanExp(t_marg);
  r.d_joint = Eigen::RowVectorXd::Constant(t_joint.size(), -1.0 / t_joint.size());
  r.d_marg = t_marg.array().exp() / (static_cast<double>(t_marg.size()) * denominator);
  return r;
}

MineResult MineEstimate(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                        const MineConfig& config) {
  config.Validate();
  Require(a.cols() == b.cols(), ErrorCode::kShape, "MINE: samples are not paired");
  Require(a.cols() >= kMinMinePairs, ErrorCode::kValidation,
          "MINE needs at least " + std::to_string(kMinMinePairs) + " paired samples, got " +
              std::to_string(a.cols()));
  Require(a.rows() >= 1 && b.rows() >= 1, ErrorCode::kShape, "MINE: empty sample dimension");
  const Eigen::MatrixXf sa = StandardizeRows(a), sb = StandardizeRows(b);
  const int n = static_cast<int>(a.cols());
  Rng rng(config.seed);

  const std::vector<int> perm = rng.Permutation(n);
  const int n_hold = std::max(2, static_cast<int>(std::lround(config.holdout_fraction * n)));
  const std::vector<int> hold(perm.begin(), perm.begin() + n_hold);
  const std::vector<int> fit(perm.begin() + n_hold, perm.end());
  const int n_fit = static_cast<int>(fit.size());
  const int batch = std::min(config.batch_size, n_fit);

  nn::Sequential<float> net =
      MakeStatisticsNetwork<float>(static_cast<int>(a.rows() + b.rows()), config.hidden, rng);
  auto params = net.Parameters();
  nn::Optimizer<float> opt(nn::OptimizerConfig{.kind = nn::OptimizerKind::kAdam, .lr = config.lr});

  // Held-out joint pairs and fixed marginal shufflings.
  const Matrix<float> hold_joint = Pair(sa, sb, hold, hold);
  std::vector<Matrix<float>> hold_marg;
  for (int p = 0; p < config.eval_permutations; ++p) {
    std::vector<int> shuffled(hold.size());
    const auto order = rng.Permutation(n_hold);
    for (int j = 0; j < n_hold; ++j) shuffled[static_cast<size_t>(j)] = hold[order[j]];
    hold_marg.push_back(Pair(sa, sb, hold, shuffled));
  }
  auto held_out_bound = [&] {
    const double joint = net.Infer(hold_joint).cast<double>().mean();
    Eigen::RowVectorXd all(static_cast<Eigen::Index>(n_hold) * config.eval_permutations);
    for (int p = 0; p < config.eval_permutations; ++p) {
      all.segment(static_cast<Eigen::Index>(p) * n_hold, n_hold) =
          net.Infer(hold_marg[static_cast<size_t>(p)]).cast<double>().row(0);
    }
    return joint - LogMeanExp(all);
  };

  // Evaluation steps spread over the final quarter of training.
  std::set<int> eval_at;
  const int tail_start = config.steps - config.steps / 4;
  for (int e = 1; e <= config.eval_points; ++e) {
    eval_at.insert(tail_start + (config.steps - tail_start) * e / config.eval_points - 1);
  }

  MineResult result;
  double ema = 0.0;
  bool ema_init = false;
  double eval_sum = 0.0;
  int evals = 0;
  std::vector<int> ia(static_cast<size_t>(2 * batch)), ib(ia);
  for (int step = 0; step < config.steps; ++step) {
    for (int j = 0; j < batch; ++j) {
      const int i = fit[static_cast<size_t>(rng.UniformInt(n_fit))];
      const auto uj = static_cast<size_t>(j);
      ia[uj] = i;
      ib[uj] = i;
      ia[uj + batch] = i;
      ib[uj + batch] = fit[static_cast<size_t>(rng.UniformInt(n_fit))];
    }
    net.ZeroGrad();
    const Eigen::RowVectorXd t = net.Forward(Pair(sa, sb, ia, ib)).cast<double>().row(0);
    const Eigen::RowVectorXd tm = t.tail(batch);
    const double mean_exp = std::exp(LogMeanExp(tm));
    ema = ema_init ? (1.0 - config.ema_decay) * ema + config.ema_decay * mean_exp : mean_exp;
    ema_init = true;
    // Maximize the bound; the log term's gradient uses the moving average.
    const DvTerms dv = DonskerVaradhan(t.head(batch), tm, ema);
    if (!std::isfinite(dv.bound)) Fail(ErrorCode::kNumeric, "MINE bound is not finite");
    result.train_bound.push_back(dv.bound);
    Matrix<float> dt(1, 2 * batch);
    dt.row(0).head(batch) = dv.d_joint.cast<float>();
    dt.row(0).tail(batch) = dv.d_marg.cast<float>();
    net.Backward(dt);
    opt.Step(params);

    if (eval_at.count(step) != 0) {
      eval_sum += held_out_bound();
      ++evals;
    }
  }
  result.raw_bound = eval_sum / std::max(evals, 1);
  result.mi_nats = std::max(0.0, result.raw_bound);
  return result;
}

Eigen::MatrixXd OneHot(const std::vector<int>& labels, int classes, double noise, Rng& rng) {
  Eigen::MatrixXd out(classes, static_cast<Eigen::Index>(labels.size()));
  for (size_t j = 0; j < labels.size(); ++j) {
    Require(labels[j] >= 0 && labels[j] < classes, ErrorCode::kValidation,
            "one-hot label out of range");
    for (int c = 0; c < classes; ++c) {
      out(c, static_cast<Eigen::Index>(j)) = (c == labels[j] ? 1.0 : 0.0) + noise * rng.Normal();
    }
  }
  return out;
}

std::vector<MiPoint> DisentanglementAudit(
    const std::vector<Matrix<float>>& snapshots,
    const std::map<std::string, std::pair<std::vector<int>, int>>& labels_and_cardinality,
    const MineConfig& config) {
  Require(!snapshots.empty(), ErrorCode::kValidation, "disentanglement audit: no snapshots");
  std::vector<MiPoint> points;
  uint64_t stream = 0;
  for (const auto& [name, lc] : labels_and_cardinality) {
    Rng rng(DeriveSeed(config.seed, stream++));
    const Eigen::MatrixXd b = OneHot(lc.first, lc.second, 0.01, rng);
    for (size_t e = 0; e < snapshots.size(); ++e) {
      Require(snapshots[e].cols() == b.cols(), ErrorCode::kShape,
              "snapshot " + std::to_string(e) + " does not match the label count");
      const auto r = MineEstimate(snapshots[e].cast<double>(), b, config);
      points.push_back({static_cast<int>(e), name, r.mi_nats});
    }
  }
  std::stable_sort(points.begin(), points.end(),
                   [](const MiPoint& x, const MiPoint& y) { return x.epoch < y.epoch; });
  return points;
}

std::string MiCurveCsv(const std::vector<MiPoint>& points) {
  std::ostringstream os;
  os << "epoch,attribute,mi_nats\n" << std::setprecision(9);
  for (const auto& p : points) os << p.epoch << ',' << p.attribute << ',' << p.mi_nats << '\n';
  return os.str();
}

// ---- Trade-off sweep ----------------------------------------------------------

SweepResult TradeoffSweep(const std::vector<double>& w_u_grid, const std::vector<double>& w_s_grid,
                          const SweepInputs& in) {
  Require(!w_u_grid.empty() && !w_s_grid.empty(), ErrorCode::kConfig, "sweep grids are empty");
  Require(in.bundle != nullptr && in.eval_set != nullptr && in.utility != nullptr &&
              in.intrusive != nullptr,
          ErrorCode::kConfig, "sweep inputs incomplete");
  const auto& data = *in.eval_set;
  const int card_u = static_cast<int>(data.schema.Get(in.utility->attribute).cardinality);
  const int card_s = static_cast<int>(data.schema.Get(in.private_attribute).cardinality);
  const std::vector<int> u_true = data.Labels(in.utility->attribute);
  const std::vector<int> s_true = data.Labels(in.private_attribute);

  guidance::ObfuscationRequest req;
  req.features = data.Features();
  req.s_true[in.private_attribute] = s_true;

  SweepResult result;
  if (in.digest) result.digest_before = in.digest();
  for (double w_u : w_u_grid) {
    for (double w_s : w_s_grid) {
      guidance::GuidanceSpec spec;
      spec.w_u = w_u;
      spec.negations = {{in.private_attribute, w_s}};
      const Eigen::MatrixXf obf = guidance::Obfuscate(*in.bundle, req, spec, in.options);
      const std::vector<int> pu = in.utility->model.Predict(obf);
      const std::vector<int> ps = in.intrusive->model.Predict(obf);
      SweepRow row;
      row.w_u = w_u;
      row.w_s = w_s;
      row.utility_acc = Accuracy(pu, u_true);
      row.utility_f1 = MacroF1(pu, u_true, card_u);
      row.intrusive_acc = Accuracy(ps, s_true);
      row.privacy_loss = PrivacyLoss(row.intrusive_acc, card_s);
      result.rows.push_back(row);
    }
  }
  if (in.digest) {
    result.digest_after = in.digest();
    result.digests_constant = result.digest_before == result.digest_after;
  }
  return result;
}

std::string SweepCsv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "w_u,w_s,utility_acc,utility_f1,intrusive_acc,privacy_loss\n" << std::setprecision(9);
  for (const auto& r : rows) {
    os << r.w_u << ',' << r.w_s << ',' << r.utility_acc << ',' << r.utility_f1 << ','
       << r.intrusive_acc << ',' << r.privacy_loss << '\n';
  }
  return os.str();
}

}  // namespace veil::audit
