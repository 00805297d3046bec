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

#ifndef VEIL_DIFFUSION_LDM_H_
#define VEIL_DIFFUSION_LDM_H_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "veil/common/rng.h"
#include "veil/diffusion/schedule.h"
#include "veil/diffusion/unet.h"
#include "veil/nn/checkpoint.h"
#include "veil/nn/optimizer.h"
#include "veil/vae/vae.h"

namespace veil::diffusion {

// Per-dimension affine map from VAE latents to the roughly unit-scale space
// the diffusion model works in: u = (z - mean) / scale.
struct LatentScaler {
  Eigen::VectorXf mean;
  Eigen::VectorXf scale;

  static LatentScaler Identity(int dim);
  static LatentScaler Fit(const vae::CleanLatents& latents);
  Matrix<float> Apply(const Matrix<float>& z) const;
  Matrix<float> Invert(const Matrix<float>& u) const;
  int dim() const { return static_cast<int>(mean.size()); }
};

// One noised training batch: which timesteps, which noise, which columns had
// their conditioning dropped.
struct NoisedBatch {
  std::vector<int> t;
  Matrix<float> eps;
  Matrix<float> z_t;
  Matrix<float> cond;
  std::vector<bool> dropped;
};

// Draws t ~ U{0..T-1}, eps ~ N(0, I), and replaces each conditioning column
// by zeros with probability p_uncond.
NoisedBatch MakeNoisedBatch(const Matrix<float>& z0, const Matrix<float>& cond,
                            const NoiseSchedule& schedule, double p_uncond, Rng& rng);

// Mean over the batch of ||eps - eps_hat||^2 (summed over latent dims).
// Writes d(loss)/d(eps_hat) when `grad` is non-null.
double NoisePredictionLoss(const Matrix<float>& eps, const Matrix<float>& eps_hat,
                           Matrix<float>* grad);

using NoisePredictorFn = std::function<Matrix<float>(const NoisedBatch& batch)>;

// Loss of an arbitrary predictor on a freshly noised batch (no update).
double LdmLoss(const vae::CleanLatents& z0, const Matrix<float>& cond,
               const NoiseSchedule& schedule, double p_uncond, Rng& rng,
               const NoisePredictorFn& predictor);

// Trained LDM: noise predictor, its schedule and the latent scaler.
struct LdmModel {
  UNet1d<float> unet;
  NoiseSchedule schedule;
  LatentScaler scaler;
};

// One optimizer step of the UNet on a batch of clean latents (mapped through
// the model's scaler). Error(kNumeric) on a non-finite loss.
double LdmTrainStep(const vae::CleanLatents& z0, const Matrix<float>& cond, LdmModel& model,
                    nn::Optimizer<float>& optimizer, double p_uncond, Rng& rng);

struct LdmTrainConfig {
  int steps = 3000;
  int batch_size = 128;
  double lr = 1e-3;
  double lr_min = 0.0;
  double weight_decay = 0.01;
  double p_uncond = 0.1;
  bool fit_scaler = true;
  uint64_t seed = 3;
};

struct LdmTrainResult {
  std::vector<double> loss_history;  // one per step
  std::vector<double> lr_history;
};

// AdamW with cosine annealing over `steps`. Batches are drawn without
// replacement, reshuffling each pass. Refits model.scaler from `z0` first
// when config.fit_scaler is set.
LdmTrainResult TrainLdm(LdmModel& model, const vae::CleanLatents& z0, const Matrix<float>& cond,
                        const LdmTrainConfig& config);

inline constexpr const char* kLdmKind = "ldm";
nn::Checkpoint LdmToCheckpoint(const LdmModel& model);
LdmModel LdmFromCheckpoint(const nn::Checkpoint& ckpt);

}  // namespace veil::diffusion

#endif  // VEIL_DIFFUSION_LDM_H_
