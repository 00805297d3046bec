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

#ifndef VEIL_VAE_VAE_H_
#define VEIL_VAE_VAE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "veil/common/rng.h"
#include "veil/dataio/dataset.h"
#include "veil/nn/checkpoint.h"
#include "veil/nn/layers.h"

namespace veil::vae {

using nn::Matrix;

struct VaeConfig {
  int input_dim = 256;  // channels * window_len
  std::vector<int> hidden = {256, 256, 128, 64};
  int latent_dim = 16;
  double kl_weight = 1e-6;

  // Full-size widths (2048, 2048, 1024, 512) with a 60-d latent.
  static VaeConfig PaperPreset(int input_dim);
  void Validate() const;
};

// Column-wise posterior parameters, latent_dim x batch.
template <typename T>
struct VaePosterior {
  Matrix<T> mu;
  Matrix<T> logvar;
};

template <typename T>
class VaeModel;
class CleanLatents;
CleanLatents EncodeClean(const VaeModel<float>& model, const Matrix<float>& x);

// Latents produced by the encoder's deterministic path (posterior mean).
// Only EncodeClean can construct one, so anything that accepts CleanLatents
// is statically guaranteed never to see reparameterized samples.
class CleanLatents {
 public:
  const Matrix<float>& values() const { return values_; }
  int dim() const { return static_cast<int>(values_.rows()); }
  size_t size() const { return static_cast<size_t>(values_.cols()); }
  CleanLatents Subset(const std::vector<int>& columns) const;

 private:
  friend CleanLatents EncodeClean(const VaeModel<float>& model, const Matrix<float>& x);
  explicit CleanLatents(Matrix<float> values) : values_(std::move(values)) {}
  Matrix<float> values_;
};

// MLP encoder producing [mu; logvar] and a mirrored MLP decoder.
template <typename T>
class VaeModel final : public nn::Module<T> {
 public:
  VaeModel(const VaeConfig& config, Rng& rng);

  const VaeConfig& config() const { return config_; }
  int latent_dim() const { return config_.latent_dim; }

  VaePosterior<T> Encode(const Matrix<T>& x) const;
  Matrix<T> Decode(const Matrix<T>& z) const;
  // z = mu(x), no sampling noise.
  Matrix<T> DeterministicLatent(const Matrix<T>& x) const { return Encode(x).mu; }

  nn::Sequential<T>& encoder() { return encoder_; }
  nn::Sequential<T>& decoder() { return decoder_; }

  void CollectParameters(const std::string& prefix, nn::ParameterList<T>& out) override;

 private:
  VaeConfig config_;
  nn::Sequential<T> encoder_;
  nn::Sequential<T> decoder_;
};

// z = mu + noise .* exp(logvar / 2).
template <typename T>
Matrix<T> Reparameterize(const VaePosterior<T>& posterior, const Matrix<T>& noise);

// Per-column -1/2 * sum(1 + logvar - mu^2 - exp(logvar)).
template <typename T>
Eigen::Matrix<double, Eigen::Dynamic, 1> KlDivergence(const VaePosterior<T>& posterior);

struct VaeTrainConfig {
  int epochs = 60;
  int batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 0.01;
  uint64_t seed = 1;
};

struct VaeTrainStats {
  double loss = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
};

struct VaeTrainResult {
  std::vector<VaeTrainStats> history;  // one entry per optimizer step
  double initial_loss = 0.0;           // full-data loss before training
  double final_loss = 0.0;             // full-data loss after training
  double final_reconstruction_mse = 0.0;
};

// Mean-squared reconstruction error + kl_weight * mean KL, AdamW. A
// non-finite loss aborts with Error(kNumeric).
VaeTrainResult TrainVae(VaeModel<float>& model, const dataio::Dataset& train,
                        const VaeTrainConfig& config);

// Full-data objective without noise (posterior mean decoded).
VaeTrainStats EvaluateVae(const VaeModel<float>& model, const Eigen::MatrixXf& features);

inline constexpr const char* kVaeKind = "vae";
nn::Checkpoint VaeToCheckpoint(const VaeModel<float>& model);
VaeModel<float> VaeFromCheckpoint(const nn::Checkpoint& ckpt);

}  // namespace veil::vae

#endif  // VEIL_VAE_VAE_H_
