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

#include "veil/nn/optimizer.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "veil/common/binary_io.h"
#include "veil/common/error.h"

namespace veil::nn {

template <typename T>
void Optimizer<T>::Step(const ParameterList<T>& params) {
  for (const auto& p : params) {
    if (!p.param->grad.allFinite()) {
      Fail(ErrorCode::kNumeric, "non-finite gradient in '" + p.name + "'; optimizer step aborted");
    }
  }
  auto& m = state_.first_moment;
  auto& v = state_.second_moment;
  if (m.empty()) {
    for (const auto& p : params) {
      m.push_back(Matrix<T>::Zero(p.param->value.rows(), p.param->value.cols()));
      v.push_back(Matrix<T>::Zero(p.param->value.rows(), p.param->value.cols()));
    }
  }
  Require(m.size() == params.size(), ErrorCode::kShape,
          "optimizer moments do not match parameter list");

  const auto& cfg = state_.config;
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T one_b1 = static_cast<T>(1.0 - cfg.beta1), one_b2 = static_cast<T>(1.0 - cfg.beta2);
  const T step_size = static_cast<T>(cfg.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg.eps);
  const bool decoupled = cfg.kind == OptimizerKind::kAdamW;
  const T decay_factor = static_cast<T>(1.0 - cfg.lr * cfg.weight_decay);
  const T l2 = static_cast<T>(cfg.weight_decay);

  for (size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].param->value;
    const auto& g_raw = params[i].param->grad;
    Require(m[i].rows() == w.rows() && m[i].cols() == w.cols(), ErrorCode::kShape,
            "optimizer moment shape mismatch for '" + params[i].name + "'");
    Matrix<T> g = g_raw;
    if (decoupled) {
      w *= decay_factor;
    } else if (cfg.weight_decay != 0.0) {
      g += l2 * w;
    }
    m[i] = b1 * m[i] + one_b1 * g;
    v[i] = b2 * v[i] + one_b2 * g.cwiseProduct(g);
    w.array() -= step_size * m[i].array() / (v[i].array().sqrt() * inv_sqrt_bc2 + eps);
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

std::vector<uint8_t> SerializeOptimizerState(const OptimizerState<float>& state) {
  ByteWriter w;
  w.U8(static_cast<uint8_t>(state.config.kind));
  w.F64(state.config.lr);
  w.F64(state.config.beta1);
  w.F64(state.config.beta2);
  w.F64(state.config.eps);
  w.F64(state.config.weight_decay);
  w.U64(state.step);
  w.U32(static_cast<uint32_t>(state.first_moment.size()));
  for (size_t i = 0; i < state.first_moment.size(); ++i) {
    const auto& m = state.first_moment[i];
    const auto& v = state.second_moment[i];
    w.U32(static_cast<uint32_t>(m.rows()));
    w.U32(static_cast<uint32_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.size(); ++k) w.F32(m.data()[k]);
    for (Eigen::Index k = 0; k < v.size(); ++k) w.F32(v.data()[k]);
  }
  return w.Take();
}

OptimizerState<float> DeserializeOptimizerState(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  OptimizerState<float> s;
  const uint8_t kind = r.U8();
  Require(kind <= 1, ErrorCode::kFormat, "bad optimizer kind");
  s.config.kind = static_cast<OptimizerKind>(kind);
  s.config.lr = r.F64();
  s.config.beta1 = r.F64();
  s.config.beta2 = r.F64();
  s.config.eps = r.F64();
  s.config.weight_decay = r.F64();
  s.step = r.U64();
  const uint32_t n = r.U32();
  for (uint32_t i = 0; i < n; ++i) {
    const auto rows = static_cast<Eigen::Index>(r.U32());
    const auto cols = static_cast<Eigen::Index>(r.U32());
    Matrix<float> m(rows, cols), v(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = r.F32();
    for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = r.F32();
    s.first_moment.push_back(std::move(m));
    s.second_moment.push_back(std::move(v));
  }
  Require(r.remaining() == 0, ErrorCode::kFormat, "trailing bytes in optimizer state");
  return s;
}

CosineAnnealing::CosineAnnealing(double lr_init, double lr_min, int64_t total_steps)
    : lr_init_(lr_init), lr_min_(lr_min), total_(std::max<int64_t>(total_steps, 1)) {
  Require(lr_min <= lr_init, ErrorCode::kConfig, "cosine annealing floor above initial lr");
}

double CosineAnnealing::At(int64_t step) const {
  const double s = static_cast<double>(std::clamp<int64_t>(step, 0, total_));
  return lr_min_ + 0.5 * (lr_init_ - lr_min_) * (1.0 + std::cos(std::numbers::pi * s / total_));
}

}  // namespace veil::nn
