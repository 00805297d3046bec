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

#include "veil/contrastive/contrastive.h"

#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "tests/testing/test_util.h"
#include "veil/nn/grad_check.h"

namespace veil::contrastive {
namespace {

using testing::CodeOf;
using VecD = Vector<double>;

VecD Vec(std::initializer_list<double> v) {
  VecD out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

TEST(CosineSimilarityTest, Basics) {
  const VecD u = Vec({1.0, 2.0, -0.5});
  EXPECT_NEAR(CosineSimilarity(u, u), 1.0, 1e-12);
  EXPECT_NEAR(CosineSimilarity(u, VecD(-3.0 * u)), -1.0, 1e-12);
  EXPECT_NEAR(CosineSimilarity(Vec({1.0, 0.0}), Vec({0.0, 2.0})), 0.0, 1e-12);
  EXPECT_EQ(CodeOf([&] { CosineSimilarity(u, VecD(VecD::Zero(3))); }), ErrorCode::kValidation);
}

TEST(InfoNceTest, UniformLogitsGiveLogKPlusOne) {
  const VecD z = Vec({1.0, 0.0, 0.0});
  for (int k : {1, 4, 16}) {
    std::vector<VecD> negs(static_cast<size_t>(k), z);
    EXPECT_NEAR(InfoNceLoss(z, z, negs, 0.1), std::log(k + 1.0), 1e-6);
  }
}

TEST(InfoNceTest, HandComputedValue) {
  const VecD z = Vec({1.0, 0.0});
  const double loss = InfoNceLoss(z, Vec({2.0, 0.0}), {Vec({0.0, 1.0})}, 1.0);
  EXPECT_NEAR(loss, std::log(1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(loss, 0.31326, 1e-4);
}

TEST(InfoNceTest, SymmetriesAndBounds) {
  Rng rng(1);
  auto rv = [&] { return VecD(rng.NormalMatrix<double>(5, 1)); };
  const VecD z = rv(), p = rv();
  std::vector<VecD> negs{rv(), rv(), rv(), rv()};
  const double base = InfoNceLoss(z, p, negs, 0.2);
  EXPECT_GE(base, 0.0);
  std::vector<VecD> rev(negs.rbegin(), negs.rend());
  EXPECT_NEAR(InfoNceLoss(z, p, rev, 0.2), base, 1e-12);
  std::vector<VecD> scaled;
  for (const auto& n : negs) scaled.push_back(3.0 * n);
  EXPECT_NEAR(InfoNceLoss(VecD(0.5 * z), VecD(7.0 * p), scaled, 0.2), base, 1e-12);
  EXPECT_EQ(CodeOf([&] { InfoNceLoss(VecD::Zero(5), p, negs, 0.2); }), ErrorCode::kValidation);
}

TEST(InfoNceTest, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  nn::Matrix<double> z = rng.NormalMatrix<double>(4, 1), p = rng.NormalMatrix<double>(4, 1);
  std::vector<nn::Matrix<double>> negs{rng.NormalMatrix<double>(4, 1),
                                       rng.NormalMatrix<double>(4, 1),
                                       rng.NormalMatrix<double>(4, 1)};
  auto as_vecs = [&] {
    std::vector<VecD> v;
    for (const auto& n : negs) v.push_back(n.col(0));
    return v;
  };
  const auto r = InfoNceWithGrad(z.col(0), p.col(0), as_vecs(), 0.3);
  EXPECT_NEAR(r.loss, InfoNceLoss(z.col(0), p.col(0), as_vecs(), 0.3), 1e-12);
  std::vector<nn::GradCheckEntry> entries{{"z", &z, r.d_anchor}, {"pos", &p, r.d_positive}};
  for (size_t j = 0; j < negs.size(); ++j) {
    entries.push_back({"neg" + std::to_string(j), &negs[j], r.d_negatives[j]});
  }
  const auto res = nn::GradCheck(
      [&] { return InfoNceLoss(z.col(0), p.col(0), as_vecs(), 0.3); }, entries);
  EXPECT_LE(res.max_rel_error, 1e-3) << res.worst_entry;
}

TEST(ContrastiveSamplerTest, EligibilityProperties) {
  const dataio::Dataset ds = dataio::GenerateSynthetic({.per_class = 10});
  const auto u = ds.PublicLabels();
  const auto s = ds.Labels(dataio::kSyntheticPrivateName);
  const ContrastiveSampler sampler(u);
  Rng rng(3);
  const int draws = 1000, k = 16;
  int private_differs = 0;
  for (int i = 0; i < draws; ++i) {
    const int a = rng.UniformInt(static_cast<int>(u.size()));
    const auto smp = sampler.Sample(a, k, rng);
    EXPECT_EQ(smp.anchor, a);
    EXPECT_NE(smp.positive, a);
    EXPECT_EQ(u[smp.positive], u[a]);
    ASSERT_EQ(smp.negatives.size(), static_cast<size_t>(k));
    EXPECT_EQ(std::set<int>(smp.negatives.begin(), smp.negatives.end()).size(),
              static_cast<size_t>(k));
    for (int n : smp.negatives) EXPECT_NE(u[n], u[a]);
    private_differs += s[smp.positive] != s[a];
  }
  // Each public class holds 10 segments per private class; the positive is
  // uniform over the other 19 members of the anchor's class.
  const double p = 10.0 / 19.0;
  EXPECT_NEAR(private_differs / double(draws), p, 3.0 * std::sqrt(p * (1 - p) / draws));
}

TEST(ContrastiveSamplerTest, InsufficientPoolsFail) {
  const ContrastiveSampler sampler({0, 0, 1, 1, 2});
  Rng rng(4);
  EXPECT_NO_THROW(sampler.Sample(0, 3, rng));
  EXPECT_EQ(CodeOf([&] { sampler.Sample(0, 4, rng); }), ErrorCode::kSampling);
  EXPECT_EQ(CodeOf([&] { sampler.Sample(4, 1, rng); }), ErrorCode::kSampling);
}

PublicEncoderConfig TinyEncoder() {
  PublicEncoderConfig c;
  c.channels = 2;
  c.window_len = 8;
  c.conv_channels = {3, 4};
  c.fc_widths = {6, 5};
  c.embed_dim = 4;
  return c;
}

TEST(PublicEncoderTest, UnitNormEmbeddingsAndGradCheck) {
  Rng rng(5);
  PublicEncoder<double> enc(TinyEncoder(), rng);
  const nn::Matrix<double> x = rng.NormalMatrix<double>(16, 3);
  const nn::Matrix<double> z = enc.Infer(x);
  ASSERT_EQ(z.rows(), 4);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(z.col(j).norm(), 1.0, 1e-12);
  const auto res = nn::CheckLayer(enc.net(), x, rng);
  EXPECT_LE(res.max_rel_error, 1e-3) << res.worst_entry;
  EXPECT_EQ(CodeOf([&] { enc.Infer(nn::Matrix<double>::Zero(15, 1)); }), ErrorCode::kShape);
}

TEST(PublicEncoderTest, CheckpointRoundTrip) {
  Rng rng(6);
  PublicEncoder<float> enc(TinyEncoder(), rng);
  const auto ckpt = nn::DeserializeCheckpoint(
      nn::SerializeCheckpoint(EncoderToCheckpoint(enc, ContrastiveConfig{})));
  const PublicEncoder<float> loaded = EncoderFromCheckpoint(ckpt);
  const Eigen::MatrixXf x = rng.NormalMatrix<float>(16, 4);
  EXPECT_EQ(EmbedPublic(loaded, x), EmbedPublic(enc, x));
  EXPECT_EQ(EmbedPublic(enc, x), EmbedPublic(enc, x));
}

TEST(ContrastiveTrainingTest, SingleClassFails) {
  dataio::Dataset ds = dataio::GenerateSynthetic({.n_public_classes = 1, .per_class = 8});
  Rng rng(7);
  PublicEncoder<float> enc(PublicEncoderConfig{}, rng);
  EXPECT_EQ(CodeOf([&] { TrainContrastive(enc, ds, {}, {}); }), ErrorCode::kValidation);
}

TEST(ContrastiveTrainingTest, EmbeddingCarriesPublicNotPrivate) {
  const dataio::Dataset all =
      dataio::Standardize(dataio::GenerateSynthetic({.per_class = 40, .seed = 11}));
  const auto [train, test] = dataio::Split(all, 0.8, 12);
  Rng rng(8);
  Rng rng0 = rng;
  PublicEncoder<float> enc(PublicEncoderConfig{}, rng);
  ContrastiveConfig cfg;
  cfg.epochs = 8;
  cfg.anchors_per_epoch = 1024;
  cfg.lr = 1e-3;
  const auto r = TrainContrastive(enc, train, cfg, test.Features());
  ASSERT_EQ(r.snapshots.size(), 9u);
  ASSERT_EQ(r.epoch_loss.size(), 8u);
  EXPECT_LT(r.epoch_loss.back(), std::log(cfg.negatives + 1.0));
  EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
  EXPECT_EQ(r.snapshots.back(), EmbedPublic(enc, test.Features()));

  const Eigen::MatrixXd ztr = EmbedPublic(enc, train.Features()).cast<double>();
  const Eigen::MatrixXd zte = EmbedPublic(enc, test.Features()).cast<double>();
  const testing::LinearProbe probe_u(ztr, train.PublicLabels(), 4);
  EXPECT_GE(probe_u.Accuracy(zte, test.PublicLabels()), 0.90);
  const auto s_tr = train.Labels(dataio::kSyntheticPrivateName);
  const auto s_te = test.Labels(dataio::kSyntheticPrivateName);
  // Private decodability falls from the untrained encoder's level; the
  // absolute threshold is checked on the full corpus by the acceptance suite.
  const testing::LinearProbe probe_s(ztr, s_tr, 2);
  const Eigen::MatrixXd z0te = r.snapshots.front().cast<double>();
  const PublicEncoder<float> untrained(PublicEncoderConfig{}, rng0);
  const Eigen::MatrixXd z0tr = EmbedPublic(untrained, train.Features()).cast<double>();
  const testing::LinearProbe probe_s0(z0tr, s_tr, 2);
  EXPECT_LT(probe_s.Accuracy(zte, s_te), probe_s0.Accuracy(z0te, s_te));

  // Same-U pairs are more similar than different-U pairs.
  const auto u = test.PublicLabels();
  double same = 0, diff = 0;
  int n_same = 0, n_diff = 0;
  for (Eigen::Index i = 0; i < zte.cols(); ++i) {
    for (Eigen::Index j = i + 1; j < zte.cols(); ++j) {
      const double c = CosineSimilarity<double>(zte.col(i), zte.col(j));
      if (u[i] == u[j]) {
        same += c;
        ++n_same;
      } else {
        diff += c;
        ++n_diff;
      }
    }
  }
  EXPECT_GT(same / n_same, diff / n_diff);
}

}  // namespace
}  // namespace veil::contrastive
