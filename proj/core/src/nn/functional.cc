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

#include "veil/nn/functional.h"

#include <cmath>

#include "veil/common/error.h"
#include "veil/nn/layers.h"

namespace veil::nn {

template <typename T>
Vector<T> TimeEmbedding(int t, int dim) {
  Require(dim >= 2 && dim % 2 == 0, ErrorCode::kConfig, "time embedding dim must be even");
  const int half = dim / 2;
  Vector<T> e(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    e(2 * i) = static_cast<T>(std::sin(t * freq));
    e(2 * i + 1) = static_cast<T>(std::cos(t * freq));
  }
  return e;
}

template <typename T>
Matrix<T> TimeEmbeddings(std::span<const int> timesteps, int dim) {
  Matrix<T> e(dim, static_cast<Eigen::Index>(timesteps.size()));
  for (size_t j = 0; j < timesteps.size(); ++j) {
    e.col(static_cast<Eigen::Index>(j)) = TimeEmbedding<T>(timesteps[j], dim);
  }
  return e;
}

template <typename T>
ClassificationLoss SoftmaxCrossEntropy(const Matrix<T>& logits, std::span<const int> labels,
                                       Matrix<T>* dlogits) {
  Require(static_cast<size_t>(logits.cols()) == labels.size(), ErrorCode::kShape,
          "label count does not match batch");
  const Matrix<T> logp = LogSoftmax(logits);
  const auto pred = ArgMax(logits);
  ClassificationLoss out;
  const double inv_b = 1.0 / static_cast<double>(labels.size());
  if (dlogits != nullptr) *dlogits = logp.array().exp().matrix() * static_cast<T>(inv_b);
  for (size_t j = 0; j < labels.size(); ++j) {
    const int y = labels[j];
    Require(y >= 0 && y < logits.rows(), ErrorCode::kValidation, "label out of range");
    out.loss -= static_cast<double>(logp(y, static_cast<Eigen::Index>(j)));
    if (dlogits != nullptr) (*dlogits)(y, static_cast<Eigen::Index>(j)) -= static_cast<T>(inv_b);
    if (pred[j] == y) ++out.correct;
  }
  out.loss *= inv_b;
  Require(std::isfinite(out.loss), ErrorCode::kNumeric, "non-finite cross-entropy loss");
  return out;
}

template <typename T>
std::vector<int> ArgMax(const Matrix<T>& scores) {
  std::vector<int> out(static_cast<size_t>(scores.cols()));
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    int best = 0;
    for (Eigen::Index i = 1; i < scores.rows(); ++i) {
      if (scores(i, j) > scores(best, j)) best = static_cast<int>(i);
    }
    out[static_cast<size_t>(j)] = best;
  }
  return out;
}

#define VEIL_INSTANTIATE_FUNCTIONAL(T)                                                   \
  template Vector<T> TimeEmbedding<T>(int, int);                                         \
  template Matrix<T> TimeEmbeddings<T>(std::span<const int>, int);                       \
  template ClassificationLoss SoftmaxCrossEntropy<T>(const Matrix<T>&, std::span<const int>, \
                                                     Matrix<T>*);                        \
  template std::vector<int> ArgMax<T>(const Matrix<T>&);

VEIL_INSTANTIATE_FUNCTIONAL(float)
VEIL_INSTANTIATE_FUNCTIONAL(double)

}  // namespace veil::nn
