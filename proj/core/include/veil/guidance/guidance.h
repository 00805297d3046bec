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

#ifndef VEIL_GUIDANCE_GUIDANCE_H_
#define VEIL_GUIDANCE_GUIDANCE_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "veil/common/rng.h"
#include "veil/contrastive/contrastive.h"
#include "veil/diffusion/ldm.h"
#include "veil/nn/checkpoint.h"
#include "veil/nn/layers.h"
#include "veil/vae/vae.h"

namespace veil::guidance {

using nn::Matrix;

struct AuxPrivacyConfig {
  int cond_dim = 32;
  int latent_dim = 16;
  int classes = 2;
  std::vector<int> hidden = {128, 128, 64, 32};  // 5 FC layers in total

  void Validate() const;
};

// eta: log p(S | z_U, z). The public embedding is concatenated with the
// latent at the input layer.
template <typename T>
class AuxPrivacyClassifier final : public nn::Module<T> {
 public:
  AuxPrivacyClassifier(const AuxPrivacyConfig& config, Rng& rng);

  const AuxPrivacyConfig& config() const { return config_; }

  // Column-wise log-probabilities (classes x B).
  Matrix<T> LogProb(const Matrix<T>& z_u, const Matrix<T>& z) const;
  Matrix<T> Logits(const Matrix<T>& z_u, const Matrix<T>& z) const;

  // Training path on raw logits.
  Matrix<T> Forward(const Matrix<T>& z_u, const Matrix<T>& z);
  // Returns d/dz of the loss whose logit gradient is `dlogits` (the z_U part
  // of the input gradient is dropped).
  Matrix<T> Backward(const Matrix<T>& dlogits);

  // d/dz log p(s_j | z_U, z) for every column j. Stateless: works on a
  // private copy of the network, so it is safe on a shared classifier.
  Matrix<T> LogProbGradLatent(const Matrix<T>& z_u, const Matrix<T>& z,
                              std::span<const int> s_true) const;

  void CollectParameters(const std::string& prefix, nn::ParameterList<T>& out) override {
    net_.CollectParameters(prefix, out);
  }

 private:
  Matrix<T> Input(const Matrix<T>& z_u, const Matrix<T>& z) const;

  AuxPrivacyConfig config_;
  nn::Sequential<T> net_;
};

struct AuxTrainConfig {
  int epochs = 60;
  int batch_size = 64;
  double lr = 2e-4;
  uint64_t seed = 9;
  // Negative control: train on a seeded permutation of the labels.
  bool shuffle_labels = false;
};

struct AuxTrainResult {
  std::vector<double> loss_history;
  double train_accuracy = 0.0;
};

// Cross-entropy with Adam on clean latents mapped into the diffusion space
// by `scaler` (the space the sampler's predicted z0 lives in).
AuxTrainResult TrainAuxPrivacy(AuxPrivacyClassifier<float>& eta, const vae::CleanLatents& z0,
                               const diffusion::LatentScaler& scaler, const Matrix<float>& z_u,
                               const std::vector<int>& labels, const AuxTrainConfig& config);

double AuxAccuracy(const AuxPrivacyClassifier<float>& eta, const vae::CleanLatents& z0,
                   const diffusion::LatentScaler& scaler, const Matrix<float>& z_u,
                   const std::vector<int>& labels);

// (1 + w_U) eps(z_t, t, z_U) - w_U eps(z_t, t, 0).
Matrix<float> CcfgEps(const diffusion::UNet1d<float>& unet, const Matrix<float>& z_t, int t,
                      const Matrix<float>& z_u, double w_u);

// grad_{z_t} log p_eta(s | z_U, z0_hat(z_t)) with eps_bar held constant, so
// d z0_hat / d z_t = I / sqrt(alpha_bar_t).
Matrix<float> PrivacyGrad(const AuxPrivacyClassifier<float>& eta, const Matrix<float>& z_t, int t,
                          const Matrix<float>& z_u, std::span<const int> s_true,
                          const Matrix<float>& eps_bar, const diffusion::NoiseSchedule& schedule);

struct Negation {
  const AuxPrivacyClassifier<float>* eta = nullptr;
  std::vector<int> s_true;  // one per column
  double w_s = 0.0;
};

// ccfg + sum_i w_i sqrt(1 - alpha_bar_t) PrivacyGrad_i. Zero-weight terms are
// skipped, so they contribute exactly nothing.
Matrix<float> GuidedEpsMulti(const diffusion::UNet1d<float>& unet,
                             const std::vector<Negation>& negations, const Matrix<float>& z_t,
                             int t, const Matrix<float>& z_u, double w_u,
                             const diffusion::NoiseSchedule& schedule);

Matrix<float> GuidedEps(const diffusion::UNet1d<float>& unet,
                        const AuxPrivacyClassifier<float>& eta, const Matrix<float>& z_t, int t,
                        const Matrix<float>& z_u, std::span<const int> s_true, double w_u,
                        double w_s, const diffusion::NoiseSchedule& schedule);

struct AttributeWeight {
  std::string attribute;
  double w_s = 0.0;
};

struct GuidanceSpec {
  double w_u = 0.0;
  std::vector<AttributeWeight> negations;

  // (4.5, 0.008) on a single private attribute.
  static GuidanceSpec MotionSenseLike(const std::string& attribute);
  // Human-readable warnings for weights outside w_U in [0, 9], w_S in [0, 0.1].
  std::vector<std::string> Warnings() const;
};

// Frozen components needed to obfuscate.
struct Bundle {
  vae::VaeModel<float> vae;
  contrastive::PublicEncoder<float> encoder;
  diffusion::LdmModel ldm;
  std::map<std::string, AuxPrivacyClassifier<float>> aux;  // by private attribute

  // Error(kConfig) when component shapes disagree.
  void Validate() const;
};

struct ObfuscationRequest {
  Eigen::MatrixXf features;  // features x N, standardized
  // True private class per segment, only for the attributes being negated.
  std::map<std::string, std::vector<int>> s_true;
};

// Accumulated wall-clock seconds per obfuscation stage.
struct StageTimings {
  double aux_public = 0.0;   // public embedding phi
  double unet = 0.0;         // conditional + unconditional noise predictions
  double aux_private = 0.0;  // privacy classifier gradients
  double decoder = 0.0;
  double total = 0.0;
};

struct ObfuscateOptions {
  uint64_t seed = 0;
  int batch_size = 128;
  int ddim_steps = diffusion::kDefaultDdimSteps;
  // Index of the first request segment, for seed derivation.
  uint64_t first_index = 0;
  StageTimings* timings = nullptr;  // optional
};

// z_U = phi(x); z_T ~ N(0, I) seeded per segment from (seed, index); DDIM
// with guided noise predictions; decode. Output has the input's shape.
Eigen::MatrixXf Obfuscate(const Bundle& bundle, const ObfuscationRequest& request,
                          const GuidanceSpec& spec, const ObfuscateOptions& options);

// Final predicted latents (diffusion space) alongside, for diagnostics.
struct ObfuscationTrace {
  Eigen::MatrixXf output;
  Matrix<float> z0_diffusion;
  Matrix<float> z_u;
};
ObfuscationTrace ObfuscateWithTrace(const Bundle& bundle, const ObfuscationRequest& request,
                                    const GuidanceSpec& spec, const ObfuscateOptions& options);

inline constexpr const char* kAuxKind = "aux";
nn::Checkpoint AuxToCheckpoint(const AuxPrivacyClassifier<float>& eta,
                               const std::string& attribute);
AuxPrivacyClassifier<float> AuxFromCheckpoint(const nn::Checkpoint& ckpt,
                                              std::string* attribute = nullptr);

}  // namespace veil::guidance

#endif  // VEIL_GUIDANCE_GUIDANCE_H_
