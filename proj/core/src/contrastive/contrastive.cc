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

#include <json.hpp>

#include "veil/common/error.h"
#include "veil/common/version.h"
#include "veil/nn/optimizer.h"

namespace veil::contrastive {

template <typename T>
T CosineSimilarity(const Vector<T>& u, const Vector<T>& v) {
  Require(u.size() == v.size(), ErrorCode::kShape, "cosine similarity: size mismatch");
  const T nu = u.norm(), nv = v.norm();
  Require(nu > T(0) && nv > T(0), ErrorCode::kValidation,
          "cosine similarity undefined for a zero vector");
  return std::clamp(u.dot(v) / (nu * nv), T(-1), T(1));
}

template float CosineSimilarity(const Vector<float>&, const Vector<float>&);
template double CosineSimilarity(const Vector<double>&, const Vector<double>&);

ContrastiveSampler::ContrastiveSampler(std::vector<int> public_labels)
    : labels_(std::move(public_labels)) {
  int max_label = -1;
  for (int u : labels_) {
    Require(u >= 0, ErrorCode::kValidation, "negative public label");
    max_label = std::max(max_label, u);
  }
  by_class_.resize(static_cast<size_t>(max_label + 1));
  for (size_t i = 0; i < labels_.size(); ++i) {
    by_class_[static_cast<size_t>(labels_[i])].push_back(static_cast<int>(i));
  }
}

ContrastiveSample ContrastiveSampler::Sample(int anchor, int k, Rng& rng) const {
  Require(anchor >= 0 && static_cast<size_t>(anchor) < labels_.size(), ErrorCode::kValidation,
          "anchor index out of range");
  Require(k >= 1, ErrorCode::kValidation, "need at least one negative");
  const int u = labels_[static_cast<size_t>(anchor)];
  const auto& same = by_class_[static_cast<size_t>(u)];
  Require(same.size() >= 2, ErrorCode::kSampling,
          "public class " + std::to_string(u) + " has no positive for the anchor");
  const int pool = static_cast<int>(labels_.size() - same.size());
  Require(pool >= k, ErrorCode::kSampling,
          "only " + std::to_string(pool) + " eligible negatives for K=" + std::to_string(k));

  ContrastiveSample s;
  s.anchor = anchor;
  // Uniform over same-class members other than the anchor.
  const auto self = std::lower_bound(same.begin(), same.end(), anchor) - same.begin();
  int pick = rng.UniformInt(static_cast<int>(same.size()) - 1);
  if (pick >= self) ++pick;
  s.positive = same[static_cast<size_t>(pick)];

  // K distinct draws from the complement by rejection on the full index set
  // (uniform within the eligibility set).
  std::set<int> chosen;
  const int n = static_cast<int>(labels_.size());
  while (static_cast<int>(chosen.size()) < k) {
    const int j = rng.UniformInt(n);
    if (labels_[static_cast<size_t>(j)] != u && chosen.insert(j).second) s.negatives.push_back(j);
  }
  return s;
}

namespace {

// d cos(u, v) / du.
Vector<double> CosineGrad(const Vector<double>& u, const Vector<double>& v, double cos) {
  const double nu = u.norm(), nv = v.norm();
  return v / (nu * nv) - cos * u / (nu * nu);
}

}  // namespace

InfoNceResult InfoNceWithGrad(const Vector<double>& z, const Vector<double>& z_pos,
                              const std::vector<Vector<double>>& z_negs, double tau) {
  Require(tau > 0.0, ErrorCode::kConfig, "InfoNCE temperature must be > 0");
  Require(!z_negs.empty(), ErrorCode::kValidation, "InfoNCE needs at least one negative");
  const size_t k = z_negs.size();
  std::vector<double> cos(k + 1);
  cos[0] = CosineSimilarity(z, z_pos);
  for (size_t j = 0; j < k; ++j) cos[j + 1] = CosineSimilarity(z, z_negs[j]);

  double max_logit = -INFINITY;
  for (double c : cos) max_logit = std::max(max_logit, c / tau);
  double sum = 0.0;
  std::vector<double> p(k + 1);
  for (size_t j = 0; j <= k; ++j) {
    p[j] = std::exp(cos[j] / tau - max_logit);
    sum += p[j];
  }
  for (auto& pj : p) pj /= sum;

  InfoNceResult r;
  r.loss = -(cos[0] / tau - max_logit) + std::log(sum);
  // dL/dlogit_0 = p_0 - 1, dL/dlogit_j = p_j; logit = cos / tau.
  const double g0 = (p[0] - 1.0) / tau;
  r.d_anchor = g0 * CosineGrad(z, z_pos, cos[0]);
  r.d_positive = g0 * CosineGrad(z_pos, z, cos[0]);
  r.d_negatives.resize(k);
  for (size_t j = 0; j < k; ++j) {
    const double gj = p[j + 1] / tau;
    r.d_anchor += gj * CosineGrad(z, z_negs[j], cos[j + 1]);
    r.d_negatives[j] = gj * CosineGrad(z_negs[j], z, cos[j + 1]);
  }
  return r;
}

double InfoNceLoss(const Vector<double>& z, const Vector<double>& z_pos,
                   const std::vector<Vector<double>>& z_negs, double tau) {
  return InfoNceWithGrad(z, z_pos, z_negs, tau).loss;
}

void PublicEncoderConfig::Validate() const {
  Require(channels >= 1 && window_len >= 4, ErrorCode::kConfig, "encoder input shape invalid");
  Require(!conv_channels.empty() && embed_dim >= 1, ErrorCode::kConfig,
          "encoder needs conv layers and a positive embedding dim");
}

template <typename T>
PublicEncoder<T>::PublicEncoder(const PublicEncoderConfig& config, Rng& rng) : config_(config) {
  config.Validate();
  int c = config.channels;
  int len = config.window_len;
  for (int out : config.conv_channels) {
    nn::Conv1dShape s{.in_channels = c, .out_channels = out, .kernel = 3, .stride = 2,
                      .padding = nn::Padding::kSame, .in_length = len};
    net_.template Add<nn::Conv1d<T>>(s, rng);
    net_.template Add<nn::SiLU<T>>();
    c = out;
    len = s.out_length();
  }
  int width = c * len;
  for (int w : config.fc_widths) {
    net_.template Add<nn::Dense<T>>(width, w, rng);
    net_.template Add<nn::SiLU<T>>();
    width = w;
  }
  net_.template Add<nn::Dense<T>>(width, config.embed_dim, rng);
  net_.template Add<nn::L2Normalize<T>>();
}

template <typename T>
Matrix<T> PublicEncoder<T>::Infer(const Matrix<T>& x) const {
  Require(x.rows() == config_.channels * config_.window_len, ErrorCode::kShape,
          "public encoder: input has the wrong feature size");
  return net_.Infer(x);
}

template class PublicEncoder<float>;
template class PublicEncoder<double>;

void ContrastiveConfig::Validate() const {
  Require(temperature > 0.0, ErrorCode::kConfig, "temperature must be > 0");
  Require(negatives >= 1, ErrorCode::kConfig, "negatives (K) must be >= 1");
  Require(epochs >= 0 && anchors_per_step >= 1 && anchors_per_epoch >= 0, ErrorCode::kConfig,
          "contrastive epochs/anchors must be non-negative");
}

Matrix<float> EmbedPublic(const PublicEncoder<float>& encoder, const Eigen::MatrixXf& features) {
  return encoder.Infer(features);
}

ContrastiveTrainResult TrainContrastive(PublicEncoder<float>& encoder,
                                        const dataio::Dataset& train,
                                        const ContrastiveConfig& config,
                                        const Eigen::MatrixXf& snapshot_features) {
  config.Validate();
  const std::vector<int> labels = train.PublicLabels();
  Require(std::set<int>(labels.begin(), labels.end()).size() >= 2, ErrorCode::kValidation,
          "contrastive training needs at least 2 public classes");
  const ContrastiveSampler sampler(labels);
  const Eigen::MatrixXf x_all = train.Features();
  const int n = static_cast<int>(x_all.cols());
  const int per_epoch = config.anchors_per_epoch > 0 ? config.anchors_per_epoch : n;
  const int k = config.negatives;

  nn::Optimizer<float> opt(nn::OptimizerConfig{.kind = nn::OptimizerKind::kAdam, .lr = config.lr});
  auto params = encoder.Parameters();
  Rng rng(config.seed);
  ContrastiveTrainResult result;
  auto snapshot = [&] {
    if (snapshot_features.cols() > 0) result.snapshots.push_back(encoder.Infer(snapshot_features));
  };
  snapshot();

  std::vector<int> order;
  size_t cursor = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_sum = 0.0;
    int epoch_steps = 0;
    for (int done = 0; done < per_epoch; done += config.anchors_per_step) {
      const int a = std::min(config.anchors_per_step, per_epoch - done);
      std::vector<int> members;
      members.reserve(static_cast<size_t>(a * (k + 2)));
      for (int i = 0; i < a; ++i) {
        if (cursor >= order.size()) {
          order = rng.Permutation(n);
          cursor = 0;
        }
        const auto s = sampler.Sample(order[cursor++], k, rng);
        members.push_back(s.anchor);
        members.push_back(s.positive);
        members.insert(members.end(), s.negatives.begin(), s.negatives.end());
      }
      Matrix<float> x(x_all.rows(), static_cast<Eigen::Index>(members.size()));
      for (size_t j = 0; j < members.size(); ++j) {
        x.col(static_cast<Eigen::Index>(j)) = x_all.col(members[j]);
      }

      encoder.ZeroGrad();
      const Eigen::MatrixXd emb = encoder.Forward(x).cast<double>();
      Eigen::MatrixXd demb = Eigen::MatrixXd::Zero(emb.rows(), emb.cols());
      double loss = 0.0;
      for (int i = 0; i < a; ++i) {
        const Eigen::Index base = static_cast<Eigen::Index>(i) * (k + 2);
        std::vector<Vector<double>> negs;
        for (int j = 0; j < k; ++j) negs.push_back(emb.col(base + 2 + j));
        const auto r = InfoNceWithGrad(emb.col(base), emb.col(base + 1), negs,
                                       config.temperature);
        loss += r.loss;
        demb.col(base) += r.d_anchor;
        demb.col(base + 1) += r.d_positive;
        for (int j = 0; j < k; ++j) demb.col(base + 2 + j) += r.d_negatives[j];
      }
      loss /= a;
      if (!std::isfinite(loss)) Fail(ErrorCode::kNumeric, "contrastive loss is not finite");
      encoder.Backward((demb / static_cast<double>(a)).cast<float>());
      opt.Step(params);
      result.loss_history.push_back(loss);
      epoch_sum += loss;
      ++epoch_steps;
    }
    result.epoch_loss.push_back(epoch_sum / std::max(epoch_steps, 1));
    snapshot();
  }
  return result;
}

nn::Checkpoint EncoderToCheckpoint(const PublicEncoder<float>& encoder,
                                   const ContrastiveConfig& training) {
  const auto& c = encoder.config();
  nlohmann::json meta = {{"tool_version", kToolVersion},
                         {"channels", c.channels},
                         {"window_len", c.window_len},
                         {"conv_channels", c.conv_channels},
                         {"fc_widths", c.fc_widths},
                         {"embed_dim", c.embed_dim},
                         {"temperature", training.temperature},
                         {"negatives", training.negatives}};
  nn::Checkpoint ckpt;
  ckpt.kind = kContrastiveKind;
  ckpt.metadata = meta.dump();
  ckpt.tensors = nn::CaptureParameters(encoder);
  return ckpt;
}

PublicEncoder<float> EncoderFromCheckpoint(const nn::Checkpoint& ckpt) {
  Require(ckpt.kind == kContrastiveKind, ErrorCode::kConfig,
          "checkpoint is not a contrastive encoder");
  PublicEncoderConfig c;
  try {
    const auto meta = nlohmann::json::parse(ckpt.metadata);
    c.channels = meta.at("channels").get<int>();
    c.window_len = meta.at("window_len").get<int>();
    c.conv_channels = meta.at("conv_channels").get<std::vector<int>>();
    c.fc_widths = meta.at("fc_widths").get<std::vector<int>>();
    c.embed_dim = meta.at("embed_dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kFormat, std::string("encoder checkpoint metadata: ") + e.what());
  }
  Rng rng(0);
  PublicEncoder<float> encoder(c, rng);
  nn::RestoreParameters(ckpt.tensors, encoder);
  return encoder;
}

}  // namespace veil::contrastive
