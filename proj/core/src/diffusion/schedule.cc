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

#include "veil/diffusion/schedule.h"

#include <cmath>

#include "veil/common/error.h"

namespace veil::diffusion {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  Require(betas_.size() >= 2, ErrorCode::kValidation, "noise schedule needs T >= 2");
  double prod = 1.0;
  for (size_t i = 0; i < betas_.size(); ++i) {
    const double b = betas_[i];
    Require(b > 0.0 && b < 1.0, ErrorCode::kValidation, "betas must lie in (0, 1)");
    Require(i == 0 || b > betas_[i - 1], ErrorCode::kValidation,
            "betas must be strictly increasing");
    alphas_.push_back(1.0 - b);
    prod *= 1.0 - b;
    alpha_bars_.push_back(prod);
  }
}

NoiseSchedule NoiseSchedule::Linear(int timesteps, double beta_start, double beta_end) {
  Require(timesteps >= 2, ErrorCode::kValidation, "noise schedule needs T >= 2");
  Require(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0, ErrorCode::kValidation,
          "linear schedule requires 0 < beta_start < beta_end < 1");
  std::vector<double> betas(static_cast<size_t>(timesteps));
  for (int i = 0; i < timesteps; ++i) {
    betas[static_cast<size_t>(i)] =
        beta_start + (beta_end - beta_start) * i / static_cast<double>(timesteps - 1);
  }
  betas.back() = beta_end;
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule NoiseSchedule::FromBetas(std::vector<double> betas) {
  return NoiseSchedule(std::move(betas));
}

double NoiseSchedule::AlphaBar(int t) const {
  if (t == -1) return 1.0;
  Require(t >= 0 && t < T(), ErrorCode::kValidation,
          "timestep " + std::to_string(t) + " outside [0, " + std::to_string(T()) + ")");
  return alpha_bars_[static_cast<size_t>(t)];
}

std::vector<int> NoiseSchedule::DdimTimesteps(int n) const {
  Require(n >= 2 && n <= T(), ErrorCode::kValidation,
          "DDIM step count must lie in [2, T]");
  std::vector<int> ts;
  for (int i = 0; i < n; ++i) {
    ts.push_back(static_cast<int>(
        std::lround(static_cast<double>(i) * (T() - 1) / static_cast<double>(n - 1))));
  }
  return ts;
}

template <typename T>
Matrix<T> ForwardDiffuseAt(const Matrix<T>& z0, double alpha_bar, const Matrix<T>& eps) {
  Require(z0.rows() == eps.rows() && z0.cols() == eps.cols(), ErrorCode::kShape,
          "forward diffusion: noise shape mismatch");
  const T a = static_cast<T>(std::sqrt(alpha_bar));
  const T s = static_cast<T>(std::sqrt(1.0 - alpha_bar));
  return a * z0 + s * eps;
}

template <typename T>
Matrix<T> ForwardDiffuse(const Matrix<T>& z0, int t, const Matrix<T>& eps,
                         const NoiseSchedule& schedule) {
  Require(t >= 0 && t < schedule.T(), ErrorCode::kValidation, "forward diffusion: t out of range");
  return ForwardDiffuseAt(z0, schedule.AlphaBar(t), eps);
}

template <typename T>
Matrix<T> ForwardDiffuse(const Matrix<T>& z0, std::span<const int> t, const Matrix<T>& eps,
                         const NoiseSchedule& schedule) {
  Require(static_cast<size_t>(z0.cols()) == t.size(), ErrorCode::kShape,
          "forward diffusion: one timestep per column required");
  Require(z0.rows() == eps.rows() && z0.cols() == eps.cols(), ErrorCode::kShape,
          "forward diffusion: noise shape mismatch");
  Matrix<T> out(z0.rows(), z0.cols());
  for (Eigen::Index j = 0; j < z0.cols(); ++j) {
    const int tj = t[static_cast<size_t>(j)];
    Require(tj >= 0 && tj < schedule.T(), ErrorCode::kValidation,
            "forward diffusion: t out of range");
    const double ab = schedule.AlphaBar(tj);
    out.col(j) = static_cast<T>(std::sqrt(ab)) * z0.col(j) +
                 static_cast<T>(std::sqrt(1.0 - ab)) * eps.col(j);
  }
  return out;
}

template <typename T>
Matrix<T> PredictZ0At(const Matrix<T>& z_t, const Matrix<T>& eps, double alpha_bar) {
  Require(alpha_bar > 0.0, ErrorCode::kNumeric, "predict_z0: alpha_bar is zero (singular)");
  Require(z_t.rows() == eps.rows() && z_t.cols() == eps.cols(), ErrorCode::kShape,
          "predict_z0: noise shape mismatch");
  const T s = static_cast<T>(std::sqrt(1.0 - alpha_bar));
  const T inv_a = static_cast<T>(1.0 / std::sqrt(alpha_bar));
  return (z_t - s * eps) * inv_a;
}

template <typename T>
Matrix<T> PredictZ0(const Matrix<T>& z_t, const Matrix<T>& eps, int t,
                    const NoiseSchedule& schedule) {
  Require(t >= 0 && t < schedule.T(), ErrorCode::kValidation, "predict_z0: t out of range");
  return PredictZ0At(z_t, eps, schedule.AlphaBar(t));
}

template <typename T>
Matrix<T> DdimStep(const Matrix<T>& z_t, const Matrix<T>& eps_hat, int t, int t_prev,
                   const NoiseSchedule& schedule) {
  Require(t > t_prev && t_prev >= -1, ErrorCode::kValidation,
          "DDIM step requires t > t_prev >= -1");
  const Matrix<T> z0 = PredictZ0(z_t, eps_hat, t, schedule);
  if (t_prev == -1) return z0;
  const double ab_prev = schedule.AlphaBar(t_prev);
  return static_cast<T>(std::sqrt(ab_prev)) * z0 +
         static_cast<T>(std::sqrt(1.0 - ab_prev)) * eps_hat;
}

Matrix<float> DdimSample(const Matrix<float>& z_T, std::span<const int> timesteps,
                         const NoiseSchedule& schedule, const EpsFn& eps_fn) {
  Require(!timesteps.empty(), ErrorCode::kValidation, "DDIM needs at least one timestep");
  for (size_t i = 1; i < timesteps.size(); ++i) {
    Require(timesteps[i] > timesteps[i - 1], ErrorCode::kValidation,
            "DDIM timesteps must be strictly increasing");
  }
  Matrix<float> z = z_T;
  for (size_t k = timesteps.size(); k-- > 0;) {
    const int t = timesteps[k];
    const int t_prev = k > 0 ? timesteps[k - 1] : -1;
    z = DdimStep<float>(z, eps_fn(z, t), t, t_prev, schedule);
  }
  return z;
}

#define VEIL_INSTANTIATE_SCHEDULE(T)                                                       \
  template Matrix<T> ForwardDiffuseAt<T>(const Matrix<T>&, double, const Matrix<T>&);     \
  template Matrix<T> ForwardDiffuse<T>(const Matrix<T>&, int, const Matrix<T>&,           \
                                       const NoiseSchedule&);                             \
  template Matrix<T> ForwardDiffuse<T>(const Matrix<T>&, std::span<const int>,            \
                                       const Matrix<T>&, const NoiseSchedule&);           \
  template Matrix<T> PredictZ0At<T>(const Matrix<T>&, const Matrix<T>&, double);          \
  template Matrix<T> PredictZ0<T>(const Matrix<T>&, const Matrix<T>&, int,                \
                                  const NoiseSchedule&);                                  \
  template Matrix<T> DdimStep<T>(const Matrix<T>&, const Matrix<T>&, int, int,            \
                                 const NoiseSchedule&);

VEIL_INSTANTIATE_SCHEDULE(float)
VEIL_INSTANTIATE_SCHEDULE(double)

}  // namespace veil::diffusion
