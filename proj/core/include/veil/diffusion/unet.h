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

#ifndef VEIL_DIFFUSION_UNET_H_
#define VEIL_DIFFUSION_UNET_H_

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "veil/common/rng.h"
#include "veil/nn/adagn.h"
#include "veil/nn/layers.h"

namespace veil::diffusion {

using nn::Matrix;

struct UNetConfig {
  int latent_dim = 16;  // treated as a 1-channel sequence; divisible by 4
  int cond_dim = 32;
  std::array<int, 3> channels = {32, 64, 128};
  int groups = nn::kDefaultGroups;
  int time_dim = 64;
  int context_dim = 128;

  void Validate() const;
};

// AdaGN -> SiLU -> conv -> AdaGN -> SiLU -> conv, plus a 1x1 projection on
// the skip path when the channel count changes. Every AdaGN is driven by the
// shared context vector.
template <typename T>
class ResBlock1d final : public nn::Module<T> {
 public:
  ResBlock1d(int in_channels, int out_channels, int length, int groups, int context_dim,
             Rng& rng);

  Matrix<T> Infer(const Matrix<T>& h, const Matrix<T>& ctx) const;
  Matrix<T> Forward(const Matrix<T>& h, const Matrix<T>& ctx);
  // Returns (dh, dctx).
  std::pair<Matrix<T>, Matrix<T>> Backward(const Matrix<T>& dy);

  void CollectParameters(const std::string& prefix, nn::ParameterList<T>& out) override;

 private:
  nn::AdaGroupNorm<T> norm1_;
  nn::SiLU<T> act1_;
  nn::Conv1d<T> conv1_;
  nn::AdaGroupNorm<T> norm2_;
  nn::SiLU<T> act2_;
  nn::Conv1d<T> conv2_;
  std::optional<nn::Conv1d<T>> skip_;
};

// Three-level 1-D UNet noise predictor eps(z_t, t, z_U). The conditioning
// vector is the zero vector for the unconditional branch.
template <typename T>
class UNet1d final : public nn::Module<T> {
 public:
  UNet1d(const UNetConfig& config, Rng& rng);

  const UNetConfig& config() const { return config_; }

  // z_t: latent_dim x B, cond: cond_dim x B, one timestep per column.
  Matrix<T> Infer(const Matrix<T>& z_t, std::span<const int> t, const Matrix<T>& cond) const;
  Matrix<T> Infer(const Matrix<T>& z_t, int t, const Matrix<T>& cond) const;

  Matrix<T> Forward(const Matrix<T>& z_t, std::span<const int> t, const Matrix<T>& cond);
  // Accumulates parameter gradients; returns (dz_t, dcond).
  std::pair<Matrix<T>, Matrix<T>> Backward(const Matrix<T>& deps);

  void CollectParameters(const std::string& prefix, nn::ParameterList<T>& out) override;

 private:
  Matrix<T> ContextInput(const Matrix<T>& z_t, std::span<const int> t,
                         const Matrix<T>& cond) const;

  UNetConfig config_;
  nn::Sequential<T> context_;
  nn::Conv1d<T> conv_in_;
  ResBlock1d<T> down0_;
  nn::Conv1d<T> pool0_;
  ResBlock1d<T> down1_;
  nn::Conv1d<T> pool1_;
  ResBlock1d<T> mid0_;
  ResBlock1d<T> mid1_;
  nn::Upsample1d<T> up1_;
  ResBlock1d<T> up1_block_;
  nn::Upsample1d<T> up0_;
  ResBlock1d<T> up0_block_;
  nn::AdaGroupNorm<T> out_norm_;
  nn::SiLU<T> out_act_;
  nn::Conv1d<T> conv_out_;
};

}  // namespace veil::diffusion

#endif  // VEIL_DIFFUSION_UNET_H_
