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

#ifndef VEIL_NN_OPTIMIZER_H_
#define VEIL_NN_OPTIMIZER_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "veil/nn/layer.h"

namespace veil::nn {

enum class OptimizerKind : uint8_t { kAdam = 0, kAdamW = 1 };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Adam: L2 term added to the gradient. AdamW: decoupled decay.
  double weight_decay = 0.0;
};

template <typename T>
struct OptimizerState {
  OptimizerConfig config;
  uint64_t step = 0;
  std::vector<Matrix<T>> first_moment;
  std::vector<Matrix<T>> second_moment;
};

// Bias-corrected Adam / AdamW. Moments are created lazily on the first step
// and must keep matching the parameter shapes afterwards.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) { state_.config = config; }
  explicit Optimizer(OptimizerState<T> state) : state_(std::move(state)) {}

  // Applies one update using each parameter's grad. A non-finite gradient
  // aborts the whole step (no parameter is touched) with Error(kNumeric).
  void Step(const ParameterList<T>& params);

  double learning_rate() const { return state_.config.lr; }
  void set_learning_rate(double lr) { state_.config.lr = lr; }
  const OptimizerState<T>& state() const { return state_; }

 private:
  OptimizerState<T> state_;
};

std::vector<uint8_t> SerializeOptimizerState(const OptimizerState<float>& state);
OptimizerState<float> DeserializeOptimizerState(std::span<const uint8_t> bytes);

// lr(s) = lr_min + (lr_init - lr_min) * (1 + cos(pi * s / total)) / 2, clamped
// to s in [0, total].
class CosineAnnealing {
 public:
  CosineAnnealing(double lr_init, double lr_min, int64_t total_steps);
  double At(int64_t step) const;

 private:
  double lr_init_;
  double lr_min_;
  int64_t total_;
};

}  // namespace veil::nn

#endif  // VEIL_NN_OPTIMIZER_H_
