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

#ifndef VEIL_DIFFUSION_SCHEDULE_H_
#define VEIL_DIFFUSION_SCHEDULE_H_

#include <functional>
#include <span>
#include <vector>

#include "veil/nn/layer.h"

namespace veil::diffusion {

using nn::Matrix;

inline constexpr int kDefaultTimesteps = 1000;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;
inline constexpr int kDefaultDdimSteps = 50;

// Variance schedule indexed 0..T-1. Timestep -1 is the clean-data sentinel
// with alpha_bar = 1.
class NoiseSchedule {
 public:
  static NoiseSchedule Linear(int timesteps = kDefaultTimesteps,
                              double beta_start = kDefaultBetaStart,
                              double beta_end = kDefaultBetaEnd);
  // Requires 0 < beta < 1, strictly increasing.
  static NoiseSchedule FromBetas(std::vector<double> betas);

  int T() const { return static_cast<int>(betas_.size()); }
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

  // t in [-1, T); throws Error(kValidation) otherwise.
  double AlphaBar(int t) const;

  // `n` uniformly strided timesteps t_i = round(i * (T - 1) / (n - 1)),
  // strictly increasing, first 0 and last T - 1.
  std::vector<int> DdimTimesteps(int n = kDefaultDdimSteps) const;

 private:
  explicit NoiseSchedule(std::vector<double> betas);

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

// z_t = sqrt(ab) z0 + sqrt(1 - ab) eps for an explicit alpha_bar.
template <typename T>
Matrix<T> ForwardDiffuseAt(const Matrix<T>& z0, double alpha_bar, const Matrix<T>& eps);

template <typename T>
Matrix<T> ForwardDiffuse(const Matrix<T>& z0, int t, const Matrix<T>& eps,
                         const NoiseSchedule& schedule);

// Per-column timesteps.
template <typename T>
Matrix<T> ForwardDiffuse(const Matrix<T>& z0, std::span<const int> t, const Matrix<T>& eps,
                         const NoiseSchedule& schedule);

// z0_hat = (z_t - sqrt(1 - ab) eps) / sqrt(ab). Error(kNumeric) when ab <= 0.
template <typename T>
Matrix<T> PredictZ0At(const Matrix<T>& z_t, const Matrix<T>& eps, double alpha_bar);

template <typename T>
Matrix<T> PredictZ0(const Matrix<T>& z_t, const Matrix<T>& eps, int t,
                    const NoiseSchedule& schedule);

// Deterministic DDIM update from t to t_prev (t_prev = -1 returns z0_hat).
template <typename T>
Matrix<T> DdimStep(const Matrix<T>& z_t, const Matrix<T>& eps_hat, int t, int t_prev,
                   const NoiseSchedule& schedule);

// Noise prediction at a single timestep for a batch of latents.
using EpsFn = std::function<Matrix<float>(const Matrix<float>& z_t, int t)>;

// Runs the DDIM chain over `timesteps` (increasing) from z_T down to z0.
Matrix<float> DdimSample(const Matrix<float>& z_T, std::span<const int> timesteps,
                         const NoiseSchedule& schedule, const EpsFn& eps_fn);

}  // namespace veil::diffusion

#endif  // VEIL_DIFFUSION_SCHEDULE_H_
