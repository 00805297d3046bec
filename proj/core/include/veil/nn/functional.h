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

#ifndef VEIL_NN_FUNCTIONAL_H_
#define VEIL_NN_FUNCTIONAL_H_

#include <span>
#include <vector>

#include "veil/nn/layer.h"

namespace veil::nn {

// Sinusoidal timestep embedding, interleaved:
//   e[2i] = sin(t * w_i), e[2i+1] = cos(t * w_i), w_i = 10000^(-i / (dim/2)).
// `dim` must be even.
template <typename T>
Vector<T> TimeEmbedding(int t, int dim);

// One column per timestep.
template <typename T>
Matrix<T> TimeEmbeddings(std::span<const int> timesteps, int dim);

struct ClassificationLoss {
  double loss = 0.0;  // mean negative log-likelihood
  int correct = 0;
};

// Mean NLL of integer labels under column-wise log-probabilities; writes
// d(loss)/d(logits) into `dlogits` (the log-softmax is folded in).
template <typename T>
ClassificationLoss SoftmaxCrossEntropy(const Matrix<T>& logits, std::span<const int> labels,
                                       Matrix<T>* dlogits);

// Column argmax; ties go to the lowest row index.
template <typename T>
std::vector<int> ArgMax(const Matrix<T>& scores);

}  // namespace veil::nn

#endif  // VEIL_NN_FUNCTIONAL_H_
