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

#include "veil/nn/layers.h"

#include <cmath>

#include "veil/common/error.h"

namespace veil::nn {

namespace {

template <typename T>
void CheckRows(const Matrix<T>& x, Eigen::Index rows, const char* who) {
  if (x.rows() != rows) {
    Fail(ErrorCode::kShape, std::string(who) + ": expected " + std::to_string(rows) +
                                " input features, got " + std::to_string(x.rows()));
  }
}

template <typename T>
T Sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

// ---- Dense ----------------------------------------------------------------

template <typename T>
Dense<T>::Dense(int in, int out, Rng& rng) {
  Require(in >= 1 && out >= 1, ErrorCode::kConfig, "dense layer sizes must be >= 1");
  // He-uniform weights, zero bias.
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  weight_.value = rng.UniformMatrix<T>(out, in, -bound, bound);
  bias_.value = Matrix<T>::Zero(out, 1);
  weight_.ZeroGrad();
  bias_.ZeroGrad();
}

template <typename T>
void Dense<T>::ZeroInit() {
  weight_.value.setZero();
  bias_.value.setZero();
}

template <typename T>
Matrix<T> Dense<T>::Infer(const Matrix<T>& x) const {
  CheckRows(x, weight_.value.cols(), "Dense");
  Matrix<T> y = weight_.value * x;
  y.colwise() += bias_.value.col(0);
  return y;
}

template <typename T>
Matrix<T> Dense<T>::Forward(const Matrix<T>& x) {
  x_ = x;
  return Infer(x);
}

template <typename T>
Matrix<T> Dense<T>::Backward(const Matrix<T>& dy) {
  weight_.grad.noalias() += dy * x_.transpose();
  bias_.grad += dy.rowwise().sum();
  return weight_.value.transpose() * dy;
}

template <typename T>
void Dense<T>::CollectParameters(const std::string& prefix, ParameterList<T>& out) {
  out.push_back({JoinName(prefix, "weight"), &weight_});
  out.push_back({JoinName(prefix, "bias"), &bias_});
}

// ---- Conv1d ---------------------------------------------------------------

template <typename T>
Conv1d<T>::Conv1d(const Conv1dShape& shape, Rng& rng) : shape_(shape) {
  Require(shape.kernel >= 1 && shape.kernel % 2 == 1, ErrorCode::kConfig,
          "conv1d kernel size must be odd");
  Require(shape.stride >= 1 && shape.in_channels >= 1 && shape.out_channels >= 1,
          ErrorCode::kConfig, "conv1d channels and stride must be >= 1");
  Require(shape.out_length() >= 1, ErrorCode::kShape, "conv1d input shorter than kernel");
  const int fan_in = shape.in_channels * shape.kernel;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  weight_.value = rng.UniformMatrix<T>(shape.out_channels, fan_in, -bound, bound);
  bias_.value = Matrix<T>::Zero(shape.out_channels, 1);
  weight_.ZeroGrad();
  bias_.ZeroGrad();
}

template <typename T>
Matrix<T> Conv1d<T>::Im2Col(const Matrix<T>& x) const {
  const int cin = shape_.in_channels, k = shape_.kernel, len = shape_.in_length;
  const int lout = shape_.out_length(), stride = shape_.stride, pad = shape_.pad();
  const Eigen::Index batch = x.cols();
  Matrix<T> cols = Matrix<T>::Zero(cin * k, lout * batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const T* xb = x.col(b).data();
    for (int l = 0; l < lout; ++l) {
      T* dst = cols.col(b * lout + l).data();
      const int start = l * stride - pad;
      for (int c = 0; c < cin; ++c) {
        for (int j = 0; j < k; ++j) {
          const int pos = start + j;
          if (pos >= 0 && pos < len) dst[c * k + j] = xb[c * len + pos];
        }
      }
    }
  }
  return cols;
}

template <typename T>
Matrix<T> Conv1d<T>::Infer(const Matrix<T>& x) const {
  CheckRows(x, static_cast<Eigen::Index>(shape_.in_channels) * shape_.in_length, "Conv1d");
  const int lout = shape_.out_length(), cout = shape_.out_channels;
  const Eigen::Index batch = x.cols();
  const Matrix<T> cols = Im2Col(x);
  Matrix<T> prod = weight_.value * cols;  // cout x (lout * batch)
  Matrix<T> y(static_cast<Eigen::Index>(cout) * lout, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int c = 0; c < cout; ++c) {
      const T bias = bias_.value(c, 0);
      for (int l = 0; l < lout; ++l) y(c * lout + l, b) = prod(c, b * lout + l) + bias;
    }
  }
  return y;
}

template <typename T>
Matrix<T> Conv1d<T>::Forward(const Matrix<T>& x) {
  CheckRows(x, static_cast<Eigen::Index>(shape_.in_channels) * shape_.in_length, "Conv1d");
  cols_ = Im2Col(x);
  batch_ = x.cols();
  const int lout = shape_.out_length(), cout = shape_.out_channels;
  Matrix<T> prod = weight_.value * cols_;
  Matrix<T> y(static_cast<Eigen::Index>(cout) * lout, batch_);
  for (Eigen::Index b = 0; b < batch_; ++b) {
    for (int c = 0; c < cout; ++c) {
      const T bias = bias_.value(c, 0);
      for (int l = 0; l < lout; ++l) y(c * lout + l, b) = prod(c, b * lout + l) + bias;
    }
  }
  return y;
}

template <typename T>
Matrix<T> Conv1d<T>::Backward(const Matrix<T>& dy) {
  const int cin = shape_.in_channels, k = shape_.kernel, len = shape_.in_length;
  const int lout = shape_.out_length(), cout = shape_.out_channels;
  const int stride = shape_.stride, pad = shape_.pad();
  Matrix<T> dprod(cout, lout * batch_);
  for (Eigen::Index b = 0; b < batch_; ++b) {
    for (int c = 0; c < cout; ++c) {
      for (int l = 0; l < lout; ++l) dprod(c, b * lout + l) = dy(c * lout + l, b);
    }
  }
  weight_.grad.noalias() += dprod * cols_.transpose();
  bias_.grad += dprod.rowwise().sum();
  const Matrix<T> dcols = weight_.value.transpose() * dprod;
  Matrix<T> dx = Matrix<T>::Zero(static_cast<Eigen::Index>(cin) * len, batch_);
  for (Eigen::Index b = 0; b < batch_; ++b) {
    T* dxb = dx.col(b).data();
    for (int l = 0; l < lout; ++l) {
      const T* src = dcols.col(b * lout + l).data();
      const int start = l * stride - pad;
      for (int c = 0; c < cin; ++c) {
        for (int j = 0; j < k; ++j) {
          const int pos = start + j;
          if (pos >= 0 && pos < len) dxb[c * len + pos] += src[c * k + j];
        }
      }
    }
  }
  return dx;
}

template <typename T>
void Conv1d<T>::CollectParameters(const std::string& prefix, ParameterList<T>& out) {
  out.push_back({JoinName(prefix, "weight"), &weight_});
  out.push_back({JoinName(prefix, "bias"), &bias_});
}

// ---- Activations ------------------------------------------------------------

template <typename T>
Matrix<T> SiLU<T>::Infer(const Matrix<T>& x) const {
  return x.unaryExpr([](T v) { return v * Sigmoid(v); });
}

template <typename T>
Matrix<T> SiLU<T>::Forward(const Matrix<T>& x) {
  x_ = x;
  return Infer(x);
}

template <typename T>
Matrix<T> SiLU<T>::Backward(const Matrix<T>& dy) {
  return dy.binaryExpr(x_, [](T g, T v) {
    const T s = Sigmoid(v);
    return g * s * (T(1) + v * (T(1) - s));
  });
}

template <typename T>
Matrix<T> Tanh<T>::Infer(const Matrix<T>& x) const {
  return x.array().tanh().matrix();
}

template <typename T>
Matrix<T> Tanh<T>::Forward(const Matrix<T>& x) {
  y_ = Infer(x);
  return y_;
}

template <typename T>
Matrix<T> Tanh<T>::Backward(const Matrix<T>& dy) {
  return (dy.array() * (T(1) - y_.array().square())).matrix();
}

template <typename T>
Matrix<T> L2Normalize<T>::Infer(const Matrix<T>& x) const {
  Matrix<T> y = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const T n = std::max(x.col(j).norm(), T(1e-12));
    y.col(j) /= n;
  }
  return y;
}

template <typename T>
Matrix<T> L2Normalize<T>::Forward(const Matrix<T>& x) {
  norms_.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) norms_(j) = std::max(x.col(j).norm(), T(1e-12));
  y_ = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) y_.col(j) /= norms_(j);
  return y_;
}

template <typename T>
Matrix<T> L2Normalize<T>::Backward(const Matrix<T>& dy) {
  Matrix<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index j = 0; j < dy.cols(); ++j) {
    const T proj = y_.col(j).dot(dy.col(j));
    dx.col(j) = (dy.col(j) - proj * y_.col(j)) / norms_(j);
  }
  return dx;
}

// ---- Upsample -----------------------------------------------------------------

template <typename T>
Matrix<T> Upsample1d<T>::Infer(const Matrix<T>& x) const {
  CheckRows(x, static_cast<Eigen::Index>(channels_) * in_length_, "Upsample1d");
  const int out_len = 2 * in_length_;
  Matrix<T> y(static_cast<Eigen::Index>(channels_) * out_len, x.cols());
  for (Eigen::Index b = 0; b < x.cols(); ++b) {
    for (int c = 0; c < channels_; ++c) {
      for (int l = 0; l < in_length_; ++l) {
        const T v = x(c * in_length_ + l, b);
        y(c * out_len + 2 * l, b) = v;
        y(c * out_len + 2 * l + 1, b) = v;
      }
    }
  }
  return y;
}

template <typename T>
Matrix<T> Upsample1d<T>::Backward(const Matrix<T>& dy) {
  const int out_len = 2 * in_length_;
  Matrix<T> dx(static_cast<Eigen::Index>(channels_) * in_length_, dy.cols());
  for (Eigen::Index b = 0; b < dy.cols(); ++b) {
    for (int c = 0; c < channels_; ++c) {
      for (int l = 0; l < in_length_; ++l) {
        dx(c * in_length_ + l, b) = dy(c * out_len + 2 * l, b) + dy(c * out_len + 2 * l + 1, b);
      }
    }
  }
  return dx;
}

// ---- Sequential -----------------------------------------------------------------

template <typename T>
Sequential<T>::Sequential(const Sequential& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->Clone());
}

template <typename T>
Sequential<T>& Sequential<T>::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    layers_ = std::move(copy.layers_);
  }
  return *this;
}

template <typename T>
Matrix<T> Sequential<T>::Infer(const Matrix<T>& x) const {
  Matrix<T> h = x;
  for (const auto& l : layers_) h = l->Infer(h);
  return h;
}

template <typename T>
Matrix<T> Sequential<T>::Forward(const Matrix<T>& x) {
  Matrix<T> h = x;
  for (auto& l : layers_) h = l->Forward(h);
  return h;
}

template <typename T>
Matrix<T> Sequential<T>::Backward(const Matrix<T>& dy) {
  Matrix<T> g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->Backward(g);
  return g;
}

template <typename T>
void Sequential<T>::CollectParameters(const std::string& prefix, ParameterList<T>& out) {
  for (size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->CollectParameters(JoinName(prefix, std::to_string(i)), out);
  }
}

template <typename T>
Sequential<T> MakeMlp(const std::vector<int>& widths, Rng& rng) {
  Require(widths.size() >= 2, ErrorCode::kConfig, "MLP needs at least input and output widths");
  Sequential<T> net;
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    net.template Add<Dense<T>>(widths[i], widths[i + 1], rng);
    if (i + 2 < widths.size()) net.template Add<SiLU<T>>();
  }
  return net;
}

// ---- Group normalization --------------------------------------------------------

template <typename T>
GroupNormResult<T> GroupNormForward(const Matrix<T>& x, int channels, int length, int groups,
                                    double eps) {
  Require(groups >= 1 && channels % groups == 0, ErrorCode::kConfig,
          "channels (" + std::to_string(channels) + ") not divisible by groups (" +
              std::to_string(groups) + ")");
  CheckRows(x, static_cast<Eigen::Index>(channels) * length, "GroupNorm");
  const int per_group = (channels / groups) * length;
  GroupNormResult<T> r;
  r.normalized.resize(x.rows(), x.cols());
  r.inv_std.resize(groups, x.cols());
  for (Eigen::Index b = 0; b < x.cols(); ++b) {
    for (int g = 0; g < groups; ++g) {
      const auto seg = x.col(b).segment(static_cast<Eigen::Index>(g) * per_group, per_group);
      // Accumulate in double: float sums over a group drift enough to break
      // the zero-mean/unit-variance post-condition at 1e-4.
      double mean = 0.0;
      for (Eigen::Index i = 0; i < per_group; ++i) mean += static_cast<double>(seg(i));
      mean /= per_group;
      double var = 0.0;
      for (Eigen::Index i = 0; i < per_group; ++i) {
        const double d = static_cast<double>(seg(i)) - mean;
        var += d * d;
      }
      var /= per_group;
      const double inv = 1.0 / std::sqrt(var + eps);
      r.inv_std(g, b) = static_cast<T>(inv);
      auto out = r.normalized.col(b).segment(static_cast<Eigen::Index>(g) * per_group, per_group);
      for (Eigen::Index i = 0; i < per_group; ++i) {
        out(i) = static_cast<T>((static_cast<double>(seg(i)) - mean) * inv);
      }
    }
  }
  return r;
}

template <typename T>
Matrix<T> GroupNormBackward(const Matrix<T>& dxn, const GroupNormResult<T>& fwd, int channels,
                            int length, int groups) {
  const int per_group = (channels / groups) * length;
  Matrix<T> dx(dxn.rows(), dxn.cols());
  for (Eigen::Index b = 0; b < dxn.cols(); ++b) {
    for (int g = 0; g < groups; ++g) {
      const Eigen::Index off = static_cast<Eigen::Index>(g) * per_group;
      const auto d = dxn.col(b).segment(off, per_group);
      const auto xn = fwd.normalized.col(b).segment(off, per_group);
      const T sum_d = d.sum();
      const T sum_dx = d.dot(xn);
      const T inv = fwd.inv_std(g, b);
      const T n = static_cast<T>(per_group);
      dx.col(b).segment(off, per_group) =
          (inv / n) * (n * d.array() - sum_d - xn.array() * sum_dx).matrix();
    }
  }
  return dx;
}

template <typename T>
Matrix<T> LogSoftmax(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const T m = logits.col(j).maxCoeff();
    const T lse = m + std::log((logits.col(j).array() - m).exp().sum());
    out.col(j) = logits.col(j).array() - lse;
  }
  return out;
}

#define VEIL_INSTANTIATE_LAYERS(T)                                                            \
  template class Dense<T>;                                                                    \
  template class Conv1d<T>;                                                                   \
  template class SiLU<T>;                                                                     \
  template class Tanh<T>;                                                                     \
  template class L2Normalize<T>;                                                              \
  template class Upsample1d<T>;                                                               \
  template class Sequential<T>;                                                               \
  template Sequential<T> MakeMlp<T>(const std::vector<int>&, Rng&);                           \
  template GroupNormResult<T> GroupNormForward<T>(const Matrix<T>&, int, int, int, double);   \
  template Matrix<T> GroupNormBackward<T>(const Matrix<T>&, const GroupNormResult<T>&, int,   \
                                          int, int);                                          \
  template Matrix<T> LogSoftmax<T>(const Matrix<T>&);

VEIL_INSTANTIATE_LAYERS(float)
VEIL_INSTANTIATE_LAYERS(double)

}  // namespace veil::nn
