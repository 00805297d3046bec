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

#ifndef VEIL_NN_ADAGN_H_
#define VEIL_NN_ADAGN_H_

#include <utility>

#include "veil/nn/layers.h"

namespace veil::nn {

inline constexpr int kDefaultGroups = 8;

// Adaptive group normalization:
//   out = (1 + gamma(e)) * GroupNorm(h) + beta(e)
// where [gamma; beta] = W e + b is one linear projection of the conditioning
// vector e (timestep embedding concatenated with the condition). The
// projection starts at zero, so a fresh AdaGN is plain group normalization.
template <typename T>
class AdaGroupNorm final : public Module<T> {
 public:
  AdaGroupNorm(int channels, int length, int groups, int embed_dim, Rng& rng);

  Matrix<T> Infer(const Matrix<T>& h, const Matrix<T>& e) const;
  Matrix<T> Forward(const Matrix<T>& h, const Matrix<T>& e);
  // Returns (dh, de).
  std::pair<Matrix<T>, Matrix<T>> Backward(const Matrix<T>& dy);

  void CollectParameters(const std::string& prefix, ParameterList<T>& out) override;

  Dense<T>& projection() { return projection_; }
  int channels() const { return channels_; }
  int length() const { return length_; }
  int groups() const { return groups_; }

 private:
  Matrix<T> Modulate(const Matrix<T>& normalized, const Matrix<T>& scale_shift) const;

  int channels_;
  int length_;
  int groups_;
  Dense<T> projection_;
  GroupNormResult<T> norm_;
  Matrix<T> scale_shift_;
};

}  // namespace veil::nn

#endif  // VEIL_NN_ADAGN_H_
