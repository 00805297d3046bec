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

#include "veil/nn/grad_check.h"

#include <algorithm>
#include <cmath>

namespace veil::nn {

double RelativeError(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult GradCheck(const std::function<double()>& loss,
                          std::vector<GradCheckEntry>& entries, double eps,
                          Eigen::Index max_per_entry) {
  GradCheckResult result;
  for (auto& entry : entries) {
    Matrix<double>& v = *entry.value;
    const Eigen::Index n = v.size();
    const Eigen::Index stride =
        (max_per_entry > 0 && n > max_per_entry) ? (n + max_per_entry - 1) / max_per_entry : 1;
    for (Eigen::Index k = 0; k < n; k += stride) {
      double& x = v.data()[k];
      const double saved = x;
      x = saved + eps;
      const double up = loss();
      x = saved - eps;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = RelativeError(entry.analytic.data()[k], numeric);
      ++result.checked;
      if (err > result.max_rel_error || std::isnan(err)) {
        result.max_rel_error = std::isnan(err) ? INFINITY : err;
        result.worst_entry = entry.name;
        result.worst_index = k;
      }
    }
  }
  return result;
}

GradCheckResult CheckLayer(Layer<double>& layer, const Matrix<double>& x, Rng& rng, double eps,
                           Eigen::Index max_per_entry) {
  Matrix<double> input = x;
  const Matrix<double> probe_shape = layer.Infer(input);
  const Matrix<double> r = rng.NormalMatrix<double>(probe_shape.rows(), probe_shape.cols());

  layer.ZeroGrad();
  layer.Forward(input);
  Matrix<double> dx = layer.Backward(r);

  std::vector<GradCheckEntry> entries;
  entries.push_back({"input", &input, dx});
  for (auto& p : layer.Parameters()) entries.push_back({p.name, &p.param->value, p.param->grad});

  auto loss = [&] { return (layer.Infer(input).array() * r.array()).sum(); };
  return GradCheck(loss, entries, eps, max_per_entry);
}

}  // namespace veil::nn
