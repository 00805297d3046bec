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

#ifndef VEIL_NN_GRAD_CHECK_H_
#define VEIL_NN_GRAD_CHECK_H_

#include <functional>
#include <string>
#include <vector>

#include "veil/common/rng.h"
#include "veil/nn/layer.h"

namespace veil::nn {

// A perturbable array and the analytic gradient claimed for it.
struct GradCheckEntry {
  std::string name;
  Matrix<double>* value = nullptr;
  Matrix<double> analytic;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_entry;
  Eigen::Index worst_index = -1;
  size_t checked = 0;
};

// Relative error used throughout: |a - n| / max(|a|, |n|, floor).
double RelativeError(double analytic, double numeric, double floor = 1e-6);

// Central differences of `loss` with respect to every element of every entry
// (element restored after each probe). `max_per_entry` > 0 limits the probes
// to an evenly strided subset of that many elements per entry.
GradCheckResult GradCheck(const std::function<double()>& loss,
                          std::vector<GradCheckEntry>& entries, double eps = 1e-6,
                          Eigen::Index max_per_entry = 0);

// Checks a Layer<double> on input `x` under the scalar loss sum(r .* f(x))
// with a fixed random projection r. Covers the input and all parameters.
GradCheckResult CheckLayer(Layer<double>& layer, const Matrix<double>& x, Rng& rng,
                           double eps = 1e-6, Eigen::Index max_per_entry = 0);

}  // namespace veil::nn

#endif  // VEIL_NN_GRAD_CHECK_H_
