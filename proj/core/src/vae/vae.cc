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

#include "veil/vae/vae.h"

#include <cmath>

#include <json.hpp>

#include "veil/common/error.h"
#include "veil/common/version.h"
#include "veil/nn/optimizer.h"

namespace veil::vae {
namespace {

std::vector<int> EncoderWidths(const VaeConfig& c) {
  std::vector<int> w{c.input_dim};
  w.insert(w.end(), c.hidden.begin(), c.hidden.end());
  w.push_back(2 * c.latent_dim);
  return w;
}

std::vector<int> DecoderWidths(const VaeConfig& c) {
  std::vector<int> w{c.latent_dim};
  w.insert(w.end(), c.hidden.rbegin(), c.hidden.rend());
  w.push_back(c.input_dim);
  return w;
}

}  // namespace

VaeConfig VaeConfig::PaperPreset(int input_dim) {
  VaeConfig c;
  c.input_dim = input_dim;
  c.hidden = {2048, 2048, 1024, 512};
  c.latent_dim = 60;
  return c;
}

void VaeConfig::Validate() const {
  Require(input_dim >= 1 && latent_dim >= 1, ErrorCode::kConfig, "VAE dims must be >= 1");
  for (int h : hidden) Require(h >= 1, ErrorCode::kConfig, "VAE hidden widths must be >= 1");
  Require(kl_weight >= 0.0, ErrorCode::kConfig, "kl_weight must be >= 0");
}

CleanLatents CleanLatents::Subset(const std::vector<int>& columns) const {
  Matrix<float> out(values_.rows(), static_cast<Eigen::Index>(columns.size()));
  for (size_t j = 0; j < columns.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = values_.col(columns[j]);
  }
  return CleanLatents(std::move(out));
}

CleanLatents EncodeClean(const VaeModel<float>& model, const Matrix<float>& x) {
  return CleanLatents(model.DeterministicLatent(x));
}

template <typename T>
VaeModel<T>::VaeModel(const VaeConfig& config, Rng& rng)
    : config_(config),
      encoder_((config.Validate(), nn::MakeMlp<T>(EncoderWidths(config), rng))),
      decoder_(nn::MakeMlp<T>(DecoderWidths(config), rng)) {}

template <typename T>
VaePosterior<T> VaeModel<T>::Encode(const Matrix<T>& x) const {
  Require(x.rows() == config_.input_dim, ErrorCode::kShape,
          "VAE encode: expected " + std::to_string(config_.input_dim) + " features, got " +
              std::to_string(x.rows()));
  const Matrix<T> h = encoder_.Infer(x);
  const int d = config_.latent_dim;
  return {h.topRows(d), h.bottomRows(d)};
}

template <typename T>
Matrix<T> VaeModel<T>::Decode(const Matrix<T>& z) const {
  Require(z.rows() == config_.latent_dim, ErrorCode::kShape,
          "VAE decode: latent has " + std::to_string(z.rows()) + " rows, expected " +
              std::to_string(config_.latent_dim));
  return decoder_.Infer(z);
}

template <typename T>
void VaeModel<T>::CollectParameters(const std::string& prefix, nn::ParameterList<T>& out) {
  encoder_.CollectParameters(nn::JoinName(prefix, "encoder"), out);
  decoder_.CollectParameters(nn::JoinName(prefix, "decoder"), out);
}

template <typename T>
Matrix<T> Reparameterize(const VaePosterior<T>& posterior, const Matrix<T>& noise) {
  Require(noise.rows() == posterior.mu.rows() && noise.cols() == posterior.mu.cols(),
          ErrorCode::kShape, "reparameterize: noise shape mismatch");
  return (posterior.mu.array() + noise.array() * (posterior.logvar.array() / T(2)).exp())
      .matrix();
}

template <typename T>
Eigen::Matrix<double, Eigen::Dynamic, 1> KlDivergence(const VaePosterior<T>& posterior) {
  Eigen::Matrix<double, Eigen::Dynamic, 1> kl(posterior.mu.cols());
  for (Eigen::Index j = 0; j < posterior.mu.cols(); ++j) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < posterior.mu.rows(); ++i) {
      const double mu = posterior.mu(i, j);
      const double lv = posterior.logvar(i, j);
      acc += 1.0 + lv - mu * mu - std::exp(lv);
    }
    kl(j) = -0.5 * acc;
  }
  return kl;
}

template class VaeModel<float>;
template class VaeModel<double>;
template Matrix<float> Reparameterize(const VaePosterior<float>&, const Matrix<float>&);
template Matrix<double> Reparameterize(const VaePosterior<double>&, const Matrix<double>&);
template Eigen::Matrix<double, Eigen::Dynamic, 1> KlDivergence(const VaePosterior<float>&);
template Eigen::Matrix<double, Eigen::Dynamic, 1> KlDivergence(const VaePosterior<double>&);

VaeTrainStats EvaluateVae(const VaeModel<float>& model, const Eigen::MatrixXf& features) {
  const auto post = model.Encode(features);
  const Matrix<float> recon = model.Decode(post.mu);
  VaeTrainStats s;
  s.reconstruction = (recon - features).cast<double>().squaredNorm() /
                     static_cast<double>(features.size());
  s.kl = KlDivergence(post).mean();
  s.loss = s.reconstruction + model.config().kl_weight * s.kl;
  return s;
}

VaeTrainResult TrainVae(VaeModel<float>& model, const dataio::Dataset& train,
                        const VaeTrainConfig& config) {
  Require(!train.empty(), ErrorCode::kValidation, "VAE training set is empty");
  Require(config.batch_size >= 1 && config.epochs >= 0, ErrorCode::kConfig,
          "VAE batch_size must be >= 1 and epochs >= 0");
  const Eigen::MatrixXf x_all = train.Features();
  const int n = static_cast<int>(x_all.cols());
  const int d = model.latent_dim();
  const double kl_w = model.config().kl_weight;

  nn::Optimizer<float> opt(nn::OptimizerConfig{.kind = nn::OptimizerKind::kAdamW,
                                               .lr = config.lr,
                                               .weight_decay = config.weight_decay});
  auto params = model.Parameters();
  Rng rng(config.seed);

  VaeTrainResult result;
  result.initial_loss = EvaluateVae(model, x_all).loss;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto perm = rng.Permutation(n);
    for (int start = 0; start < n; start += config.batch_size) {
      const int b = std::min(config.batch_size, n - start);
      Matrix<float> x(x_all.rows(), b);
      for (int j = 0; j < b; ++j) x.col(j) = x_all.col(perm[static_cast<size_t>(start + j)]);

      model.ZeroGrad();
      const Matrix<float> h = model.encoder().Forward(x);
      VaePosterior<float> post{h.topRows(d), h.bottomRows(d)};
      const Matrix<float> noise = rng.NormalMatrix<float>(d, b);
      const Matrix<float> z = Reparameterize(post, noise);
      const Matrix<float> recon = model.decoder().Forward(z);

      const Matrix<float> diff = recon - x;
      VaeTrainStats s;
      s.reconstruction = diff.cast<double>().squaredNorm() / static_cast<double>(diff.size());
      s.kl = KlDivergence(post).mean();
      s.loss = s.reconstruction + kl_w * s.kl;
      if (!std::isfinite(s.loss)) {
        Fail(ErrorCode::kNumeric, "VAE training diverged at epoch " + std::to_string(epoch) +
                                      " (loss is not finite)");
      }
      result.history.push_back(s);

      const Matrix<float> drecon = diff * static_cast<float>(2.0 / static_cast<double>(diff.size()));
      const Matrix<float> dz = model.decoder().Backward(drecon);
      const float kl_scale = static_cast<float>(kl_w / b);
      const Matrix<float> half_std = (post.logvar.array() / 2.f).exp().matrix();
      Matrix<float> dh(2 * d, b);
      dh.topRows(d) = dz + kl_scale * post.mu;
      dh.bottomRows(d) =
          (dz.array() * noise.array() * half_std.array() * 0.5f +
           kl_scale * 0.5f * (post.logvar.array().exp() - 1.f))
              .matrix();
      model.encoder().Backward(dh);
      opt.Step(params);
    }
  }
  const auto final_stats = EvaluateVae(model, x_all);
  result.final_loss = final_stats.loss;
  result.final_reconstruction_mse = final_stats.reconstruction;
  return result;
}

nn::Checkpoint VaeToCheckpoint(const VaeModel<float>& model) {
  const auto& c = model.config();
  nlohmann::json meta = {{"tool_version", kToolVersion},
                         {"input_dim", c.input_dim},
                         {"hidden", c.hidden},
                         {"latent_dim", c.latent_dim},
                         {"kl_weight", c.kl_weight}};
  nn::Checkpoint ckpt;
  ckpt.kind = kVaeKind;
  ckpt.metadata = meta.dump();
  ckpt.tensors = nn::CaptureParameters(model);
  return ckpt;
}

VaeModel<float> VaeFromCheckpoint(const nn::Checkpoint& ckpt) {
  Require(ckpt.kind == kVaeKind, ErrorCode::kConfig, "checkpoint is not a VAE");
  VaeConfig c;
  try {
    const auto meta = nlohmann::json::parse(ckpt.metadata);
    c.input_dim = meta.at("input_dim").get<int>();
    c.hidden = meta.at("hidden").get<std::vector<int>>();
    c.latent_dim = meta.at("latent_dim").get<int>();
    c.kl_weight = meta.at("kl_weight").get<double>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kFormat, std::string("VAE checkpoint metadata: ") + e.what());
  }
  Rng rng(0);
  VaeModel<float> model(c, rng);
  nn::RestoreParameters(ckpt.tensors, model);
  return model;
}

}  // namespace veil::vae
