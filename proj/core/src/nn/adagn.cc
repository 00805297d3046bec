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

#include "veil/nn/adagn.h"

#include "veil/common/error.h"

namespace veil::nn {

template <typename T>
AdaGroupNorm<T>::AdaGroupNorm(int channels, int length, int groups, int embed_dim, Rng& rng)
    : channels_(channels),
      length_(length),
      groups_(groups),
      projection_(embed_dim, 2 * channels, rng) {
  Require(groups >= 1 && channels % groups == 0, ErrorCode::kConfig,
          "AdaGN: channels (" + std::to_string(channels) + ") not divisible by groups (" +
              std::to_string(groups) + ")");
  projection_.ZeroInit();
}

template <typename T>
Matrix<T> AdaGroupNorm<T>::Modulate(const Matrix<T>& normalized,
                                    const Matrix<T>& scale_shift) const {
  Matrix<T> out(normalized.rows(), normalized.cols());
  for (Eigen::Index b = 0; b < normalized.cols(); ++b) {
    for (int c = 0; c < channels_; ++c) {
      const T scale = T(1) + scale_shift(c, b);
      const T shift = scale_shift(channels_ + c, b);
      for (int l = 0; l < length_; ++l) {
        out(c * length_ + l, b) = scale * normalized(c * length_ + l, b) + shift;
      }
    }
  }
  return out;
}

template <typename T>
Matrix<T> AdaGroupNorm<T>::Infer(const Matrix<T>& h, const Matrix<T>& e) const {
  Require(h.cols() == e.cols(), ErrorCode::kShape, "AdaGN: batch mismatch between h and e");
  const auto norm = GroupNormForward(h, channels_, length_, groups_);
  return Modulate(norm.normalized, projection_.Infer(e));
}

template <typename T>
Matrix<T> AdaGroupNorm<T>::Forward(const Matrix<T>& h, const Matrix<T>& e) {
  Require(h.cols() == e.cols(), ErrorCode::kShape, "AdaGN: batch mismatch between h and e");
  norm_ = GroupNormForward(h, channels_, length_, groups_);
  scale_shift_ = projection_.Forward(e);
  return Modulate(norm_.normalized, scale_shift_);
}

template <typename T>
std::pair<Matrix<T>, Matrix<T>> AdaGroupNorm<T>::Backward(const Matrix<T>& dy) {
  const Eigen::Index batch = dy.cols();
  Matrix<T> dss = Matrix<T>::Zero(2 * channels_, batch);
  Matrix<T> dxn(dy.rows(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int c = 0; c < channels_; ++c) {
      const T scale = T(1) + scale_shift_(c, b);
      T dscale = 0, dshift = 0;
      for (int l = 0; l < length_; ++l) {
        const Eigen::Index i = c * length_ + l;
        dscale += dy(i, b) * norm_.normalized(i, b);
        dshift += dy(i, b);
        dxn(i, b) = dy(i, b) * scale;
      }
      dss(c, b) = dscale;
      dss(channels_ + c, b) = dshift;
    }
  }
  Matrix<T> de = projection_.Backward(dss);
  Matrix<T> dh = GroupNormBackward(dxn, norm_, channels_, length_, groups_);
  return {std::move(dh), std::move(de)};
}

template <typename T>
void AdaGroupNorm<T>::CollectParameters(const std::string& prefix, ParameterList<T>& out) {
  projection_.CollectParameters(JoinName(prefix, "proj"), out);
}

template class AdaGroupNorm<float>;
template class AdaGroupNorm<double>;

}  // namespace veil::nn
