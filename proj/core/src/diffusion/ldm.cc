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

#include "veil/diffusion/ldm.h"

#include <cmath>

#include <json.hpp>

#include "veil/common/error.h"
#include "veil/common/version.h"

namespace veil::diffusion {

LatentScaler LatentScaler::Identity(int dim) {
  return {Eigen::VectorXf::Zero(dim), Eigen::VectorXf::Ones(dim)};
}

LatentScaler LatentScaler::Fit(const vae::CleanLatents& latents) {
  const auto& z = latents.values();
  Require(z.cols() >= 2, ErrorCode::kValidation, "latent scaler needs at least 2 samples");
  const Eigen::MatrixXd zd = z.cast<double>();
  const Eigen::VectorXd mean = zd.rowwise().mean();
  const Eigen::VectorXd var =
      (zd.colwise() - mean).array().square().rowwise().sum() / static_cast<double>(z.cols());
  LatentScaler s;
  s.mean = mean.cast<float>();
  s.scale = var.array().sqrt().max(1e-6).matrix().cast<float>();
  return s;
}

Matrix<float> LatentScaler::Apply(const Matrix<float>& z) const {
  Require(z.rows() == dim(), ErrorCode::kShape, "latent scaler: dimension mismatch");
  return ((z.colwise() - mean).array().colwise() / scale.array()).matrix();
}

Matrix<float> LatentScaler::Invert(const Matrix<float>& u) const {
  Require(u.rows() == dim(), ErrorCode::kShape, "latent scaler: dimension mismatch");
  return ((u.array().colwise() * scale.array()).matrix().colwise() + mean);
}

NoisedBatch MakeNoisedBatch(const Matrix<float>& z0, const Matrix<float>& cond,
                            const NoiseSchedule& schedule, double p_uncond, Rng& rng) {
  Require(z0.cols() == cond.cols(), ErrorCode::kShape, "LDM batch: latent/cond count mismatch");
  Require(p_uncond >= 0.0 && p_uncond <= 1.0, ErrorCode::kConfig, "p_uncond must lie in [0, 1]");
  NoisedBatch b;
  const Eigen::Index n = z0.cols();
  b.t.resize(static_cast<size_t>(n));
  for (auto& t : b.t) t = rng.UniformInt(schedule.T());
  b.eps = rng.NormalMatrix<float>(z0.rows(), n);
  b.z_t = ForwardDiffuse<float>(z0, b.t, b.eps, schedule);
  b.cond = cond;
  b.dropped.assign(static_cast<size_t>(n), false);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (rng.Bernoulli(p_uncond)) {
      b.cond.col(j).setZero();
      b.dropped[static_cast<size_t>(j)] = true;
    }
  }
  return b;
}

double NoisePredictionLoss(const Matrix<float>& eps, const Matrix<float>& eps_hat,
                           Matrix<float>* grad) {
  Require(eps.rows() == eps_hat.rows() && eps.cols() == eps_hat.cols(), ErrorCode::kShape,
          "noise prediction shape mismatch");
  const Matrix<float> diff = eps_hat - eps;
  const double b = static_cast<double>(eps.cols());
  if (grad != nullptr) *grad = diff * static_cast<float>(2.0 / b);
  return diff.cast<double>().squaredNorm() / b;
}

double LdmLoss(const vae::CleanLatents& z0, const Matrix<float>& cond,
               const NoiseSchedule& schedule, double p_uncond, Rng& rng,
               const NoisePredictorFn& predictor) {
  const NoisedBatch batch = MakeNoisedBatch(z0.values(), cond, schedule, p_uncond, rng);
  return NoisePredictionLoss(batch.eps, predictor(batch), nullptr);
}

double LdmTrainStep(const vae::CleanLatents& z0, const Matrix<float>& cond, LdmModel& model,
                    nn::Optimizer<float>& optimizer, double p_uncond, Rng& rng) {
  const NoisedBatch batch =
      MakeNoisedBatch(model.scaler.Apply(z0.values()), cond, model.schedule, p_uncond, rng);
  model.unet.ZeroGrad();
  const Matrix<float> eps_hat = model.unet.Forward(batch.z_t, batch.t, batch.cond);
  Matrix<float> grad;
  const double loss = NoisePredictionLoss(batch.eps, eps_hat, &grad);
  if (!std::isfinite(loss)) Fail(ErrorCode::kNumeric, "LDM training loss is not finite");
  model.unet.Backward(grad);
  optimizer.Step(model.unet.Parameters());
  return loss;
}

LdmTrainResult TrainLdm(LdmModel& model, const vae::CleanLatents& z0, const Matrix<float>& cond,
                        const LdmTrainConfig& config) {
  Require(z0.size() == static_cast<size_t>(cond.cols()), ErrorCode::kShape,
          "LDM training: latent/cond count mismatch");
  Require(z0.dim() == model.unet.config().latent_dim, ErrorCode::kShape,
          "LDM training: latent dim does not match the UNet");
  Require(cond.rows() == model.unet.config().cond_dim, ErrorCode::kShape,
          "LDM training: cond dim does not match the UNet");
  Require(config.steps >= 0 && config.batch_size >= 1, ErrorCode::kConfig,
          "LDM training: steps >= 0 and batch_size >= 1 required");
  if (config.fit_scaler) model.scaler = LatentScaler::Fit(z0);

  nn::Optimizer<float> opt(nn::OptimizerConfig{.kind = nn::OptimizerKind::kAdamW,
                                               .lr = config.lr,
                                               .weight_decay = config.weight_decay});
  const nn::CosineAnnealing sched(config.lr, config.lr_min, config.steps);
  Rng rng(config.seed);
  const int n = static_cast<int>(z0.size());
  const int b = std::min(config.batch_size, n);
  std::vector<int> order;
  size_t cursor = 0;

  LdmTrainResult result;
  for (int step = 0; step < config.steps; ++step) {
    if (cursor + static_cast<size_t>(b) > order.size()) {
      order = rng.Permutation(n);
      cursor = 0;
    }
    std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                         order.begin() + static_cast<std::ptrdiff_t>(cursor + b));
    cursor += static_cast<size_t>(b);
    Matrix<float> c(cond.rows(), b);
    for (int j = 0; j < b; ++j) c.col(j) = cond.col(idx[static_cast<size_t>(j)]);

    opt.set_learning_rate(sched.At(step));
    result.lr_history.push_back(opt.learning_rate());
    result.loss_history.push_back(
        LdmTrainStep(z0.Subset(idx), c, model, opt, config.p_uncond, rng));
  }
  return result;
}

nn::Checkpoint LdmToCheckpoint(const LdmModel& model) {
  const auto& c = model.unet.config();
  std::vector<double> mean(model.scaler.mean.data(),
                           model.scaler.mean.data() + model.scaler.mean.size());
  std::vector<double> scale(model.scaler.scale.data(),
                            model.scaler.scale.data() + model.scaler.scale.size());
  nlohmann::json meta = {
      {"tool_version", kToolVersion},
      {"unet",
       {{"latent_dim", c.latent_dim},
        {"cond_dim", c.cond_dim},
        {"channels", c.channels},
        {"groups", c.groups},
        {"time_dim", c.time_dim},
        {"context_dim", c.context_dim}}},
      {"schedule", {{"T", model.schedule.T()}, {"betas", model.schedule.betas()}}},
      {"scaler", {{"mean", mean}, {"scale", scale}}}};
  nn::Checkpoint ckpt;
  ckpt.kind = kLdmKind;
  ckpt.metadata = meta.dump();
  ckpt.tensors = nn::CaptureParameters(model.unet);
  return ckpt;
}

LdmModel LdmFromCheckpoint(const nn::Checkpoint& ckpt) {
  Require(ckpt.kind == kLdmKind, ErrorCode::kConfig, "checkpoint is not an LDM");
  UNetConfig c;
  std::vector<double> betas, mean, scale;
  try {
    const auto meta = nlohmann::json::parse(ckpt.metadata);
    const auto& u = meta.at("unet");
    c.latent_dim = u.at("latent_dim").get<int>();
    c.cond_dim = u.at("cond_dim").get<int>();
    c.channels = u.at("channels").get<std::array<int, 3>>();
    c.groups = u.at("groups").get<int>();
    c.time_dim = u.at("time_dim").get<int>();
    c.context_dim = u.at("context_dim").get<int>();
    betas = meta.at("schedule").at("betas").get<std::vector<double>>();
    mean = meta.at("scaler").at("mean").get<std::vector<double>>();
    scale = meta.at("scaler").at("scale").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kFormat, std::string("LDM checkpoint metadata: ") + e.what());
  }
  Require(mean.size() == static_cast<size_t>(c.latent_dim) && scale.size() == mean.size(),
          ErrorCode::kFormat, "LDM checkpoint scaler has the wrong dimension");
  Rng rng(0);
  LdmModel model{UNet1d<float>(c, rng), NoiseSchedule::FromBetas(betas),
                 LatentScaler::Identity(c.latent_dim)};
  for (int i = 0; i < c.latent_dim; ++i) {
    model.scaler.mean(i) = static_cast<float>(mean[static_cast<size_t>(i)]);
    model.scaler.scale(i) = static_cast<float>(scale[static_cast<size_t>(i)]);
  }
  nn::RestoreParameters(ckpt.tensors, model.unet);
  return model;
}

}  // namespace veil::diffusion
