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

#ifndef VEIL_TESTS_TESTING_TEST_UTIL_H_
#define VEIL_TESTS_TESTING_TEST_UTIL_H_

#include <atomic>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "veil/common/error.h"

namespace veil::testing {

// Code of the veil::Error thrown by `fn`, or kInternal when nothing throws.
inline ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

// Fresh directory under the system temp dir, removed on destruction.
class ScopedTempDir {
 public:
  ScopedTempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("veil-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScopedTempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScopedTempDir(const ScopedTempDir&) = delete;
  ScopedTempDir& operator=(const ScopedTempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Multinomial logistic regression fit by full-batch gradient descent on
// standardized features. Independent of the library's classifiers.
class LinearProbe {
 public:
  LinearProbe(const Eigen::MatrixXd& x, const std::vector<int>& y, int classes,
              int iterations = 500, double lr = 0.5)
      : classes_(classes) {
    mean_ = x.rowwise().mean();
    Eigen::MatrixXd xc = x.colwise() - mean_;
    scale_ = (xc.array().square().rowwise().mean().sqrt() + 1e-8).matrix();
    xc = (xc.array().colwise() / scale_.array()).matrix();
    const Eigen::Index n = x.cols();
    w_ = Eigen::MatrixXd::Zero(classes, x.rows());
    b_ = Eigen::VectorXd::Zero(classes);
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(classes, n);
    for (Eigen::Index j = 0; j < n; ++j) onehot(y[static_cast<size_t>(j)], j) = 1.0;
    for (int it = 0; it < iterations; ++it) {
      const Eigen::MatrixXd p = Softmax((w_ * xc).colwise() + b_);
      const Eigen::MatrixXd g = (p - onehot) / static_cast<double>(n);
      w_ -= lr * g * xc.transpose();
      b_ -= lr * g.rowwise().sum();
    }
  }

  double Accuracy(const Eigen::MatrixXd& x, const std::vector<int>& y) const {
    Eigen::MatrixXd xc = x.colwise() - mean_;
    xc = (xc.array().colwise() / scale_.array()).matrix();
    const Eigen::MatrixXd logits = (w_ * xc).colwise() + b_;
    int correct = 0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      Eigen::Index arg;
      logits.col(j).maxCoeff(&arg);
      correct += static_cast<int>(arg) == y[static_cast<size_t>(j)];
    }
    return static_cast<double>(correct) / static_cast<double>(x.cols());
  }

 private:
  static Eigen::MatrixXd Softmax(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd e = (logits.rowwise() - logits.colwise().maxCoeff()).array().exp();
    return e.array().rowwise() / e.colwise().sum().array();
  }

  int classes_;
  Eigen::VectorXd mean_, scale_, b_;
  Eigen::MatrixXd w_;
};

}  // namespace veil::testing

#endif  // VEIL_TESTS_TESTING_TEST_UTIL_H_
