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

#ifndef VEIL_NN_LAYERS_H_
#define VEIL_NN_LAYERS_H_

#include <memory>
#include <utility>
#include <vector>

#include "veil/common/rng.h"
#include "veil/nn/layer.h"

namespace veil::nn {

// y = W x + b. Weights and bias start U(-1/sqrt(in), 1/sqrt(in)).
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(int in, int out, Rng& rng);

  Matrix<T> Infer(const Matrix<T>& x) const override;
  Matrix<T> Forward(const Matrix<T>& x) override;
  Matrix<T> Backward(const Matrix<T>& dy) override;
  std::unique_ptr<Layer<T>> Clone() const override { return std::make_unique<Dense>(*this); }
  void CollectParameters(const std::string& prefix, ParameterList<T>& out) override;

  int in() const { return static_cast<int>(weight_.value.cols()); }
  int out() const { return static_cast<int>(weight_.value.rows()); }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }
  void ZeroInit();

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
  Matrix<T> x_;
};

enum class Padding { kValid, kSame };

struct Conv1dShape {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  Padding padding = Padding::kSame;
  int in_length = 1;

  int pad() const { return padding == Padding::kSame ? (kernel - 1) / 2 : 0; }
  int out_length() const { return (in_length + 2 * pad() - kernel) / stride + 1; }
};

// 1-D convolution over a [C_in x L] sequence. Kernel size must be odd.
// Weight layout: C_out x (C_in * k), column index = c_in * k + tap.
template <typename T>
class Conv1d final : public Layer<T> {
 public:
  Conv1d(const Conv1dShape& shape, Rng& rng);

  Matrix<T> Infer(const Matrix<T>& x) const override;
  Matrix<T> Forward(const Matrix<T>& x) override;
  Matrix<T> Backward(const Matrix<T>& dy) override;
  std::unique_ptr<Layer<T>> Clone() const override { return std::make_unique<Conv1d>(*this); }
  void CollectParameters(const std::string& prefix, ParameterList<T>& out) override;

  const Conv1dShape& shape() const { return shape_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  Matrix<T> Im2Col(const Matrix<T>& x) const;

  Conv1dShape shape_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Matrix<T> cols_;
  Eigen::Index batch_ = 0;
};

template <typename T>
class SiLU final : public Layer<T> {
 public:
  Matrix<T> Infer(const Matrix<T>& x) const override;
  Matrix<T> Forward(const Matrix<T>& x) override;
  Matrix<T> Backward(const Matrix<T>& dy) override;
  std::unique_ptr<Layer<T>> Clone() const override { return std::make_unique<SiLU>(*this); }
  void CollectParameters(const std::string&, ParameterList<T>&) override {}

 private:
  Matrix<T> x_;
};

template <typename T>
class Tanh final : public Layer<T> {
 public:
  Matrix<T> Infer(const Matrix<T>& x) const override;
  Matrix<T> Forward(const Matrix<T>& x) override;
  Matrix<T> Backward(const Matrix<T>& dy) override;
  std::unique_ptr<Layer<T>> Clone() const override { return std::make_unique<Tanh>(*this); }
  void CollectParameters(const std::string&, ParameterList<T>&) override {}

 private:
  Matrix<T> y_;
};

// Column-wise projection onto the unit sphere.
template <typename T>
class L2Normalize final : public Layer<T> {
 public:
  Matrix<T> Infer(const Matrix<T>& x) const override;
  Matrix<T> Forward(const Matrix<T>& x) override;
  Matrix<T> Backward(const Matrix<T>& dy) override;
  std::unique_ptr<Layer<T>> Clone() const override { return std::make_unique<L2Normalize>(*this); }
  void CollectParameters(const std::string&, ParameterList<T>&) override {}

 private:
  Matrix<T> y_;
  Vector<T> norms_;
};

// Nearest-neighbour x2 upsampling of a [C x L] sequence.
template <typename T>
class Upsample1d final : public Layer<T> {
 public:
  Upsample1d(int channels, int in_length) : channels_(channels), in_length_(in_length) {}

  Matrix<T> Infer(const Matrix<T>& x) const override;
  Matrix<T> Forward(const Matrix<T>& x) override { return Infer(x); }
  Matrix<T> Backward(const Matrix<T>& dy) override;
  std::unique_ptr<Layer<T>> Clone() const override { return std::make_unique<Upsample1d>(*this); }
  void CollectParameters(const std::string&, ParameterList<T>&) override {}

 private:
  int channels_;
  int in_length_;
};

template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& Add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Matrix<T> Infer(const Matrix<T>& x) const override;
  Matrix<T> Forward(const Matrix<T>& x) override;
  Matrix<T> Backward(const Matrix<T>& dy) override;
  std::unique_ptr<Layer<T>> Clone() const override { return std::make_unique<Sequential>(*this); }
  void CollectParameters(const std::string& prefix, ParameterList<T>& out) override;

  size_t size() const { return layers_.size(); }
  Layer<T>& at(size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

// Builds Dense(+SiLU) stacks: widths = {in, h1, ..., out}; SiLU after every
// layer except the last.
template <typename T>
Sequential<T> MakeMlp(const std::vector<int>& widths, Rng& rng);

// Group normalization without affine parameters over a [C x L] sequence.
template <typename T>
struct GroupNormResult {
  Matrix<T> normalized;
  Matrix<T> inv_std;  // groups x batch
};

template <typename T>
GroupNormResult<T> GroupNormForward(const Matrix<T>& x, int channels, int length, int groups,
                                    double eps = 1e-5);
template <typename T>
Matrix<T> GroupNormBackward(const Matrix<T>& dxn, const GroupNormResult<T>& fwd, int channels,
                            int length, int groups);

template <typename T>
Matrix<T> LogSoftmax(const Matrix<T>& logits);

}  // namespace veil::nn

#endif  // VEIL_NN_LAYERS_H_
