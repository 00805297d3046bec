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

#ifndef VEIL_COMMON_RNG_H_
#define VEIL_COMMON_RNG_H_

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace veil {

// SplitMix64 finalizer; used to derive independent stream seeds.
uint64_t Mix64(uint64_t x);

// Seed for stream `stream` of a run seeded with `seed`.
inline uint64_t DeriveSeed(uint64_t seed, uint64_t stream) {
  return Mix64(seed ^ Mix64(stream + 0x9e3779b97f4a7c15ULL));
}

// Explicitly seeded random source. Never global; every stochastic operation
// receives one.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  double Uniform() { return uniform_(engine_); }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  double Normal() { return normal_(engine_); }
  bool Bernoulli(double p) { return Uniform() < p; }

  // Uniform integer in [0, n).
  int UniformInt(int n) {
    return std::uniform_int_distribution<int>(0, n - 1)(engine_);
  }

  uint64_t NextU64() { return engine_(); }

  template <typename T>
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> NormalMatrix(Eigen::Index rows,
                                                                Eigen::Index cols) {
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<T>(Normal());
    }
    return m;
  }

  template <typename T>
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> UniformMatrix(Eigen::Index rows,
                                                                 Eigen::Index cols,
                                                                 double lo, double hi) {
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<T>(Uniform(lo, hi));
    }
    return m;
  }

  // Fisher-Yates permutation of [0, n).
  std::vector<int> Permutation(int n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace veil

#endif  // VEIL_COMMON_RNG_H_
