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

#ifndef VEIL_CONTRASTIVE_CONTRASTIVE_H_
#define VEIL_CONTRASTIVE_CONTRASTIVE_H_

#include <cstdint>
#include <functional>
#include <vector>

#include "veil/common/rng.h"
#include "veil/dataio/dataset.h"
#include "veil/nn/checkpoint.h"
#include "veil/nn/layers.h"

namespace veil::contrastive {

using nn::Matrix;
using nn::Vector;

// u.v / (|u| |v|). Error(kValidation) for a zero vector.
template <typename T>
T CosineSimilarity(const Vector<T>& u, const Vector<T>& v);

struct ContrastiveSample {
  int anchor = 0;
  int positive = 0;
  std::vector<int> negatives;
};

// Draws (anchor, positive, K negatives) triples. It is built from public
// labels alone, so positive selection cannot depend on private attributes.
class ContrastiveSampler {
 public:
  explicit ContrastiveSampler(std::vector<int> public_labels);

  // Positive: uniform over other members of the anchor's class. Negatives:
  // K distinct indices drawn uniformly from the other classes.
  // Error(kSampling) when either pool is too small.
  ContrastiveSample Sample(int anchor, int k, Rng& rng) const;

  size_t size() const { return labels_.size(); }

 private:
  std::vector<int> labels_;
  std::vector<std::vector<int>> by_class_;
};

struct InfoNceResult {
  double loss = 0.0;
  Vector<double> d_anchor;
  Vector<double> d_positive;
  std::vector<Vector<double>> d_negatives;
};

// -log softmax of the positive logit among {S(z, z+), S(z, z_j-)} / tau,
// with S the cosine similarity; max-subtracted log-sum-exp.
double InfoNceLoss(const Vector<double>& z, const Vector<double>& z_pos,
                   const std::vector<Vector<double>>& z_negs, double tau);
InfoNceResult InfoNceWithGrad(const Vector<double>& z, const Vector<double>& z_pos,
                              const std::vector<Vector<double>>& z_negs, double tau);

struct PublicEncoderConfig {
  int channels = 2;
  int window_len = 128;
  std::vector<int> conv_channels = {16, 32};  // stride-2, kernel 3
  std::vector<int> fc_widths = {128, 64};
  int embed_dim = 32;

  void Validate() const;
};

// phi: conv(stride 2) x2 -> FC x3 -> unit-norm embedding z_U.
template <typename T>
class PublicEncoder final : public nn::Module<T> {
 public:
  PublicEncoder(const PublicEncoderConfig& config, Rng& rng);

  const PublicEncoderConfig& config() const { return config_; }
  int embed_dim() const { return config_.embed_dim; }

  Matrix<T> Infer(const Matrix<T>& x) const;
  Matrix<T> Forward(const Matrix<T>& x) { return net_.Forward(x); }
  Matrix<T> Backward(const Matrix<T>& dz) { return net_.Backward(dz); }
  nn::Sequential<T>& net() { return net_; }

  void CollectParameters(const std::string& prefix, nn::ParameterList<T>& out) override {
    net_.CollectParameters(prefix, out);
  }

 private:
  PublicEncoderConfig config_;
  nn::Sequential<T> net_;
};

struct ContrastiveConfig {
  double temperature = 0.5;
  int negatives = 16;
  int epochs = 40;
  int anchors_per_step = 32;
  // Anchors visited per epoch; 0 means one pass over the dataset.
  int anchors_per_epoch = 0;
  double lr = 2e-4;
  uint64_t seed = 5;

  void Validate() const;
};

struct ContrastiveTrainResult {
  std::vector<double> loss_history;   // one per optimizer step
  std::vector<double> epoch_loss;     // mean step loss per epoch
  // snapshots[e] embeds the snapshot set after e epochs (e = 0 is the
  // untrained encoder); embed_dim x N each.
  std::vector<Matrix<float>> snapshots;
};

// InfoNCE with explicit K-negative sampling and Adam. Only the public
// labels of `train` are read. `snapshot_features` (features x N, may be
// empty) is embedded before training and after every epoch.
ContrastiveTrainResult TrainContrastive(PublicEncoder<float>& encoder,
                                        const dataio::Dataset& train,
                                        const ContrastiveConfig& config,
                                        const Eigen::MatrixXf& snapshot_features);

// z_U = phi(x) for every column.
Matrix<float> EmbedPublic(const PublicEncoder<float>& encoder, const Eigen::MatrixXf& features);

inline constexpr const char* kContrastiveKind = "contrastive";
nn::Checkpoint EncoderToCheckpoint(const PublicEncoder<float>& encoder,
                                   const ContrastiveConfig& training);
PublicEncoder<float> EncoderFromCheckpoint(const nn::Checkpoint& ckpt);

}  // namespace veil::contrastive

#endif  // VEIL_CONTRASTIVE_CONTRASTIVE_H_
