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

#ifndef VEIL_NN_LAYER_H_
#define VEIL_NN_LAYER_H_

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace veil::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Activations are (features x batch): one column per sample. Sequence
// features are flattened channel-major, index = channel * length + position.

template <typename T>
struct Parameter {
  Matrix<T> value;
  Matrix<T> grad;

  void ZeroGrad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param;
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

// Anything that owns trainable parameters. Parameter order is the order of
// CollectParameters and is stable for a given architecture.
template <typename T>
class Module {
 public:
  virtual ~Module() = default;

  virtual void CollectParameters(const std::string& prefix, ParameterList<T>& out) = 0;

  ParameterList<T> Parameters() {
    ParameterList<T> out;
    CollectParameters("", out);
    return out;
  }

  // Read-only view for serialization and digests of frozen models.
  ParameterList<T> Parameters() const {
    return const_cast<Module*>(this)->Parameters();
  }

  void ZeroGrad() {
    for (auto& p : Parameters()) p.param->ZeroGrad();
  }

  size_t ParameterCount() const {
    size_t n = 0;
    for (const auto& p : Parameters()) n += static_cast<size_t>(p.param->value.size());
    return n;
  }
};

// Single-input differentiable function.
//
// Infer is const and keeps no state, so frozen layers may be shared across
// threads. Forward caches what Backward needs; Backward accumulates parameter
// gradients into Parameter::grad and returns the input gradient.
template <typename T>
class Layer : public Module<T> {
 public:
  virtual Matrix<T> Infer(const Matrix<T>& x) const = 0;
  virtual Matrix<T> Forward(const Matrix<T>& x) = 0;
  virtual Matrix<T> Backward(const Matrix<T>& dy) = 0;
  virtual std::unique_ptr<Layer<T>> Clone() const = 0;
};

inline std::string JoinName(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace veil::nn

#endif  // VEIL_NN_LAYER_H_
