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

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "tests/testing/test_util.h"
#include "veil/nn/grad_check.h"

namespace veil::audit {
namespace {

using testing::CodeOf;
using dataio::kSyntheticPrivateName;
using dataio::kSyntheticPublicName;

TEST(PrivacyLossTest, Examples) {
  EXPECT_EQ(PrivacyLoss(0.5, 2), 0.0);
  EXPECT_EQ(PrivacyLoss(0.25, 4), 0.0);
  EXPECT_DOUBLE_EQ(PrivacyLoss(0.9352, 2), 0.4352);
  EXPECT_DOUBLE_EQ(PrivacyLoss(0.1, 2), 0.4);
  EXPECT_EQ(CodeOf([] { PrivacyLoss(0.5, 1); }), ErrorCode::kValidation);
}

TEST(MetricsTest, AccuracyAndMacroF1) {
  const std::vector<int> truth{0, 0, 1, 1, 2, 2};
  EXPECT_DOUBLE_EQ(Accuracy(truth, truth), 1.0);
  EXPECT_DOUBLE_EQ(MacroF1(truth, truth, 3), 1.0);
  // Class 0: tp 1, fn 1; class 1: tp 2, fp 1; class 2: tp 2.
  const std::vector<int> pred{0, 1, 1, 1, 2, 2};
  EXPECT_DOUBLE_EQ(Accuracy(pred, truth), 5.0 / 6.0);
  EXPECT_NEAR(MacroF1(pred, truth, 3), (2.0 / 3.0 + 0.8 + 1.0) / 3.0, 1e-12);
  EXPECT_EQ(CodeOf([&] { Accuracy({0}, truth); }), ErrorCode::kShape);
}

EvalClassifierConfig TinyEval() {
  EvalClassifierConfig c;
  c.channels = 2;
  c.window_len = 8;
  c.conv_channels = {3, 4, 4, 4};
  c.conv_strides = {1, 2, 2, 1};
  c.fc_widths = {6, 5};
  c.classes = 3;
  return c;
}

TEST(EvalClassifierTest, GradCheckNormalizationAndTies) {
  Rng rng(1);
  EvalClassifier<double> clf(TinyEval(), rng);
  const Matrix<double> x = rng.NormalMatrix<double>(16, 3);
  const auto res = nn::CheckLayer(clf.net(), x, rng);
  EXPECT_LE(res.max_rel_error, 1e-3) << res.worst_entry;
  const Matrix<double> lp = clf.LogProb(x);
  for (Eigen::Index j = 0; j < lp.cols(); ++j) {
    EXPECT_NEAR(lp.col(j).array().exp().sum(), 1.0, 1e-12);
  }
  // All-zero parameters give tied logits, resolved to class 0.
  for (auto& p : clf.Parameters()) p.param->value.setZero();
  EXPECT_EQ(clf.Predict(x), (std::vector<int>{0, 0, 0}));
  EXPECT_EQ(CodeOf([&] { clf.Logits(Matrix<double>::Zero(15, 1)); }), ErrorCode::kShape);
}

struct RawSplit {
  dataio::Dataset train, test;
};

RawSplit MakeSplit(int per_class, uint64_t seed) {
  const auto [tr, te] =
      dataio::Split(dataio::GenerateSynthetic({.per_class = per_class, .seed = seed}), 0.75, 2);
  dataio::Dataset train = dataio::Standardize(tr);
  dataio::Dataset test = dataio::ApplyStandardization(te, *train.channel_stats);
  return {std::move(train), std::move(test)};
}

class RawClassifiers : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    split_ = new RawSplit(MakeSplit(40, 3));
    EvalTrainConfig cfg;
    cfg.epochs = 15;
    u_ = new TrainedClassifier(TrainEvalClassifier(split_->train, kSyntheticPublicName, cfg,
                                                   &split_->test));
    s_ = new TrainedClassifier(TrainEvalClassifier(split_->train, kSyntheticPrivateName, cfg,
                                                   &split_->test));
  }
  static void TearDownTestSuite() {
    delete u_;
    delete s_;
    delete split_;
  }

  static RawSplit* split_;
  static TrainedClassifier* u_;
  static TrainedClassifier* s_;
};

RawSplit* RawClassifiers::split_ = nullptr;
TrainedClassifier* RawClassifiers::u_ = nullptr;
TrainedClassifier* RawClassifiers::s_ = nullptr;

TEST_F(RawClassifiers, RawAccuracyIsHigh) {
  EXPECT_GE(u_->held_out_accuracy, 0.95);
  EXPECT_GE(s_->held_out_accuracy, 0.95);
  EXPECT_LT(u_->loss_history.back(), u_->loss_history.front());
  EXPECT_EQ(u_->trained_on, TrainedOn::kRaw);
}

TEST_F(RawClassifiers, IdentityEvaluationReproducesRawMetrics) {
  const std::map<std::string, const TrainedClassifier*> clfs{{kSyntheticPublicName, u_},
                                                             {kSyntheticPrivateName, s_}};
  const auto& test = split_->test;
  const EvalReport identity = Evaluate(test.WithFeatures(test.Features()), clfs);
  const EvalReport again = Evaluate(test, clfs);
  ASSERT_EQ(identity.attributes.size(), 2u);
  for (size_t i = 0; i < 2; ++i) {
    const auto& m = identity.attributes[i];
    EXPECT_EQ(m.accuracy, again.attributes[i].accuracy);
    EXPECT_EQ(m.macro_f1, again.attributes[i].macro_f1);
    EXPECT_EQ(m.privacy_loss, PrivacyLoss(m.accuracy, m.cardinality));
  }
  EXPECT_EQ(identity.Get(kSyntheticPublicName).accuracy, u_->held_out_accuracy);
  EXPECT_EQ(identity.Get(kSyntheticPrivateName).accuracy, s_->held_out_accuracy);
  EXPECT_EQ(identity.segments, test.size());
}

TEST_F(RawClassifiers, NoiseFeaturesDriveUtilityTowardChance) {
  Rng rng(4);
  const auto& test = split_->test;
  const dataio::Dataset noise =
      test.WithFeatures(rng.NormalMatrix<float>(test.feature_size(), test.size()));
  const EvalReport r = Evaluate(noise, {{kSyntheticPublicName, u_}});
  EXPECT_LT(r.Get(kSyntheticPublicName).accuracy, 0.5);
}

TEST_F(RawClassifiers, MissingAttributeIsSchemaError) {
  const std::map<std::string, const TrainedClassifier*> clfs{{"age", u_}};
  EXPECT_EQ(CodeOf([&] { Evaluate(split_->test, clfs); }), ErrorCode::kSchema);
}

TEST_F(RawClassifiers, ReportJsonIsConsistent) {
  EvalReport r = Evaluate(split_->test, {{kSyntheticPublicName, u_}, {kSyntheticPrivateName, s_}});
  r.context_json = R"({"seed": 5})";
  const auto j = nlohmann::json::parse(ReportToJson(r));
  EXPECT_EQ(j.at("f1_average"), "macro");
  EXPECT_TRUE(j.contains("tool_version"));
  EXPECT_EQ(j.at("context").at("seed"), 5);
  for (const auto& a : j.at("attributes")) {
    if (a.at("role") == "public") {
      EXPECT_FALSE(a.contains("privacy_loss"));
    } else {
      EXPECT_EQ(a.at("privacy_loss").get<double>(),
                PrivacyLoss(a.at("accuracy").get<double>(), a.at("cardinality").get<int>()));
    }
  }
  r.context_json = "{";
  EXPECT_EQ(CodeOf([&] { ReportToJson(r); }), ErrorCode::kFormat);
}

TEST_F(RawClassifiers, CheckpointRoundTrip) {
  const auto ckpt = nn::DeserializeCheckpoint(nn::SerializeCheckpoint(EvalToCheckpoint(*s_)));
  const TrainedClassifier loaded = EvalFromCheckpoint(ckpt);
  EXPECT_EQ(loaded.attribute, kSyntheticPrivateName);
  EXPECT_EQ(loaded.held_out_accuracy, s_->held_out_accuracy);
  const Eigen::MatrixXf x = split_->test.Features();
  EXPECT_EQ(loaded.model.Logits(x), s_->model.Logits(x));
}

TEST_F(RawClassifiers, ReidentificationOnRawDataSucceedsAndIsDeterministic) {
  EvalTrainConfig cfg;
  cfg.epochs = 15;
  const double a = ReidentificationAttack(split_->train, split_->test, kSyntheticPrivateName, cfg);
  EXPECT_GE(a, 0.95);
  EXPECT_EQ(a, s_->held_out_accuracy);
}

TEST(EvalTrainingTest, SingleClassAttributeFails) {
  const dataio::Dataset ds = dataio::GenerateSynthetic({.n_public_classes = 1, .per_class = 4});
  EXPECT_EQ(CodeOf([&] { TrainEvalClassifier(ds, kSyntheticPublicName, {}); }),
            ErrorCode::kValidation);
}

// ---- MINE ----------------------------------------------------------------------

TEST(DonskerVaradhanTest, BoundAndGradient) {
  Rng rng(5);
  Matrix<double> tj = rng.NormalMatrix<double>(1, 6), tm = rng.NormalMatrix<double>(1, 5);
  const double lme = std::log(tm.array().exp().mean());
  const DvTerms dv = DonskerVaradhan(tj.row(0), tm.row(0), std::exp(lme));
  EXPECT_NEAR(dv.bound, tj.mean() - lme, 1e-12);
  std::vector<nn::GradCheckEntry> entries{{"joint", &tj, dv.d_joint}, {"marg", &tm, dv.d_marg}};
  const auto res = nn::GradCheck(
      [&] { return -(tj.mean() - std::log(tm.array().exp().mean())); }, entries);
  EXPECT_LE(res.max_rel_error, 1e-3) << res.worst_entry;
}

TEST(MineTest, StatisticsNetworkPassesGradCheck) {
  Rng rng(6);
  nn::Sequential<double> net = MakeStatisticsNetwork<double>(3, 16, rng);
  EXPECT_EQ(net.Infer(Matrix<double>::Zero(3, 2)).rows(), 1);
  const auto res = nn::CheckLayer(net, rng.NormalMatrix<double>(3, 4), rng, 1e-6, 40);
  EXPECT_LE(res.max_rel_error, 1e-3) << res.worst_entry;
}

TEST(MineTest, IndependentNormalsGiveNearZero) {
  Rng rng(7);
  const Eigen::MatrixXd a = rng.NormalMatrix<double>(1, 2000), b = rng.NormalMatrix<double>(1, 2000);
  const MineResult r = MineEstimate(a, b, {});
  EXPECT_LE(r.mi_nats, 0.05);
  EXPECT_GE(r.mi_nats, 0.0);
  EXPECT_EQ(r.train_bound.size(), static_cast<size_t>(MineConfig{}.steps));
}

TEST(MineTest, CorrelatedGaussiansMatchClosedForm) {
  Rng rng(8);
  const double rho = 0.9;
  const Eigen::MatrixXd x = rng.NormalMatrix<double>(1, 2000);
  const Eigen::MatrixXd y = rho * x + std::sqrt(1 - rho * rho) * rng.NormalMatrix<double>(1, 2000);
  const double truth = -0.5 * std::log(1 - rho * rho);
  EXPECT_NEAR(truth, 0.8304, 1e-4);
  EXPECT_NEAR(MineEstimate(x, y, {}).mi_nats, truth, 0.15);
}

TEST(MineTest, DiscreteCopiesApproachEntropyFromBelow) {
  Rng rng(9);
  std::vector<int> labels(2000);
  for (auto& l : labels) l = rng.UniformInt(4);
  const Eigen::MatrixXd a = OneHot(labels, 4, 0.01, rng), b = OneHot(labels, 4, 0.01, rng);
  const double mi = MineEstimate(a, b, {}).mi_nats;
  EXPECT_LE(mi, std::log(4.0) + 0.1);
  EXPECT_GE(mi, std::log(4.0) - 0.2);
}

TEST(MineTest, ErrorsAndDeterminism) {
  Rng rng(10);
  const Eigen::MatrixXd a = rng.NormalMatrix<double>(2, 1000), b = rng.NormalMatrix<double>(1, 1000);
  MineConfig cfg;
  cfg.steps = 40;
  EXPECT_EQ(MineEstimate(a, b, cfg).raw_bound, MineEstimate(a, b, cfg).raw_bound);
  EXPECT_EQ(CodeOf([&] { MineEstimate(a.leftCols(kMinMinePairs - 1), b.leftCols(kMinMinePairs - 1), cfg); }),
            ErrorCode::kValidation);
  EXPECT_EQ(CodeOf([&] { MineEstimate(a, b.leftCols(999), cfg); }), ErrorCode::kShape);
  cfg.ema_decay = 0.0;
  EXPECT_EQ(CodeOf([&] { MineEstimate(a, b, cfg); }), ErrorCode::kConfig);
}

TEST(DisentanglementAuditTest, CurvesCsvAndErrors) {
  Rng rng(11);
  std::vector<int> u(1000), s(1000);
  for (size_t i = 0; i < u.size(); ++i) {
    u[i] = rng.UniformInt(4);
    s[i] = rng.UniformInt(2);
  }
  // Snapshot 1 encodes U; snapshot 0 is noise.
  std::vector<Matrix<float>> snaps{rng.NormalMatrix<float>(3, 1000),
                                   OneHot(u, 4, 0.05, rng).cast<float>()};
  const std::map<std::string, std::pair<std::vector<int>, int>> labels{{"U", {u, 4}},
                                                                       {"S", {s, 2}}};
  MineConfig cfg;
  cfg.steps = 300;
  const auto pts = DisentanglementAudit(snaps, labels, cfg);
  ASSERT_EQ(pts.size(), 4u);
  auto mi = [&](int epoch, const std::string& attr) {
    for (const auto& p : pts) {
      if (p.epoch == epoch && p.attribute == attr) return p.mi_nats;
    }
    ADD_FAILURE() << "missing point";
    return -1.0;
  };
  EXPECT_GT(mi(1, "U"), mi(0, "U") + 0.5);
  EXPECT_LE(mi(1, "S"), 0.05);
  EXPECT_EQ(DisentanglementAudit(snaps, labels, cfg).size(), pts.size());

  const std::string csv = MiCurveCsv(pts);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "epoch,attribute,mi_nats");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 4);

  EXPECT_EQ(CodeOf([&] { DisentanglementAudit({}, labels, cfg); }), ErrorCode::kValidation);
  snaps.push_back(Matrix<float>::Zero(3, 10));
  EXPECT_EQ(CodeOf([&] { DisentanglementAudit(snaps, labels, cfg); }), ErrorCode::kShape);
}

// ---- Sweep ---------------------------------------------------------------------

guidance::Bundle TinyBundle(Rng& rng) {
  constexpr int kLatent = 8, kCond = 4;
  vae::VaeConfig vc;
  vc.input_dim = 16;
  vc.hidden = {12};
  vc.latent_dim = kLatent;
  contrastive::PublicEncoderConfig ec;
  ec.channels = 2;
  ec.window_len = 8;
  ec.conv_channels = {3, 4};
  ec.fc_widths = {6, 5};
  ec.embed_dim = kCond;
  diffusion::UNetConfig uc;
  uc.latent_dim = kLatent;
  uc.cond_dim = kCond;
  uc.channels = {4, 8, 8};
  uc.groups = 2;
  uc.time_dim = 4;
  uc.context_dim = 6;
  guidance::AuxPrivacyConfig ac;
  ac.cond_dim = kCond;
  ac.latent_dim = kLatent;
  ac.classes = 2;
  ac.hidden = {12, 10, 8, 6};
  guidance::Bundle b{vae::VaeModel<float>(vc, rng), contrastive::PublicEncoder<float>(ec, rng),
                     diffusion::LdmModel{diffusion::UNet1d<float>(uc, rng),
                                         diffusion::NoiseSchedule::Linear(),
                                         diffusion::LatentScaler::Identity(kLatent)},
                     {}};
  for (auto& p : b.ldm.unet.Parameters()) {
    p.param->value += 0.1f * rng.NormalMatrix<float>(p.param->value.rows(), p.param->value.cols());
  }
  b.aux.emplace(kSyntheticPrivateName, guidance::AuxPrivacyClassifier<float>(ac, rng));
  return b;
}

TEST(TradeoffSweepTest, RowsBaselineAndDigests) {
  const dataio::Dataset data = dataio::Standardize(
      dataio::GenerateSynthetic({.per_class = 3, .window_len = 8, .seed = 12}));
  Rng rng(13);
  const guidance::Bundle bundle = TinyBundle(rng);
  EvalTrainConfig ec;
  ec.epochs = 2;
  const TrainedClassifier u = TrainEvalClassifier(data, kSyntheticPublicName, ec);
  const TrainedClassifier s = TrainEvalClassifier(data, kSyntheticPrivateName, ec);

  SweepInputs in;
  in.bundle = &bundle;
  in.eval_set = &data;
  in.utility = &u;
  in.intrusive = &s;
  in.private_attribute = kSyntheticPrivateName;
  in.options.ddim_steps = 4;
  in.options.seed = 21;
  int digest_calls = 0;
  in.digest = [&] {
    ++digest_calls;
    return std::string("frozen");
  };
  const SweepResult r = TradeoffSweep({0.0, 2.0, 4.0}, {0.0, 0.05}, in);
  ASSERT_EQ(r.rows.size(), 6u);
  EXPECT_TRUE(r.digests_constant);
  EXPECT_EQ(digest_calls, 2);
  EXPECT_EQ(r.rows[3].w_u, 2.0);
  EXPECT_EQ(r.rows[3].w_s, 0.05);

  // The (0, 0) cell is the unguided conditional baseline.
  guidance::ObfuscationRequest req{data.Features(), {}};
  const Eigen::MatrixXf base = guidance::Obfuscate(bundle, req, {0.0, {}}, in.options);
  const std::vector<int> pu = u.model.Predict(base), ps = s.model.Predict(base);
  EXPECT_EQ(r.rows[0].utility_acc, Accuracy(pu, data.Labels(kSyntheticPublicName)));
  EXPECT_EQ(r.rows[0].intrusive_acc, Accuracy(ps, data.Labels(kSyntheticPrivateName)));
  EXPECT_EQ(r.rows[0].privacy_loss, PrivacyLoss(r.rows[0].intrusive_acc, 2));

  const std::string csv = SweepCsv(r.rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "w_u,w_s,utility_acc,utility_f1,intrusive_acc,privacy_loss");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_EQ(CodeOf([&] { TradeoffSweep({}, {0.0}, in); }), ErrorCode::kConfig);
}

}  // namespace
}  // namespace veil::audit
