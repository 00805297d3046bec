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

#include "veil/guidance/guidance.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "veil/common/error.h"
#include "veil/common/version.h"
#include "veil/nn/functional.h"
#include "veil/nn/optimizer.h"

namespace veil::guidance {

void AuxPrivacyConfig::Validate() const {
  Require(cond_dim >= 1 && latent_dim >= 1, ErrorCode::kConfig, "aux classifier dims invalid");
  Require(classes >= 2, ErrorCode::kValidation,
          "aux privacy classifier needs at least 2 private classes");
}

namespace {

std::vector<int> AuxWidths(const AuxPrivacyConfig& c) {
  c.Validate();
  std::vector<int> w{c.cond_dim + c.latent_dim};
  w.insert(w.end(), c.hidden.begin(), c.hidden.end());
  w.push_back(c.classes);
  return w;
}

}  // namespace

template <typename T>
AuxPrivacyClassifier<T>::AuxPrivacyClassifier(const AuxPrivacyConfig& config, Rng& rng)
    : config_(config), net_(nn::MakeMlp<T>(AuxWidths(config), rng)) {}

template <typename T>
Matrix<T> AuxPrivacyClassifier<T>::Input(const Matrix<T>& z_u, const Matrix<T>& z) const {
  Require(z_u.rows() == config_.cond_dim && z.rows() == config_.latent_dim &&
              z_u.cols() == z.cols(),
          ErrorCode::kShape, "aux classifier: input shape mismatch");
  Matrix<T> in(z_u.rows() + z.rows(), z.cols());
  in.topRows(z_u.rows()) = z_u;
  in.bottomRows(z.rows()) = z;
  return in;
}

template <typename T>
Matrix<T> AuxPrivacyClassifier<T>::Logits(const Matrix<T>& z_u, const Matrix<T>& z) const {
  return net_.Infer(Input(z_u, z));
}

template <typename T>
Matrix<T> AuxPrivacyClassifier<T>::LogProb(const Matrix<T>& z_u, const Matrix<T>& z) const {
  return nn::LogSoftmax(Logits(z_u, z));
}

template <typename T>
Matrix<T> AuxPrivacyClassifier<T>::Forward(const Matrix<T>& z_u, const Matrix<T>& z) {
  return net_.Forward(Input(z_u, z));
}

template <typename T>
Matrix<T> AuxPrivacyClassifier<T>::Backward(const Matrix<T>& dlogits) {
  return net_.Backward(dlogits).bottomRows(config_.latent_dim);
}

template <typename T>
Matrix<T> AuxPrivacyClassifier<T>::LogProbGradLatent(const Matrix<T>& z_u, const Matrix<T>& z,
                                                     std::span<const int> s_true) const {
  Require(s_true.size() == static_cast<size_t>(z.cols()), ErrorCode::kShape,
          "aux classifier: one true class per column required");
  nn::Sequential<T> net = net_;
  const Matrix<T> logits = net.Forward(Input(z_u, z));
  // d log softmax_s / d logits = onehot(s) - softmax.
  Matrix<T> d = -nn::LogSoftmax(logits).array().exp().matrix();
  for (size_t j = 0; j < s_true.size(); ++j) {
    const int s = s_true[j];
    Require(s >= 0 && s < config_.classes, ErrorCode::kValidation, "private class out of range");
    d(s, static_cast<Eigen::Index>(j)) += T(1);
  }
  return net.Backward(d).bottomRows(config_.latent_dim);
}

template class AuxPrivacyClassifier<float>;
template class AuxPrivacyClassifier<double>;

AuxTrainResult TrainAuxPrivacy(AuxPrivacyClassifier<float>& eta, const vae::CleanLatents& z0,
                               const diffusion::LatentScaler& scaler, const Matrix<float>& z_u,
                               const std::vector<int>& labels, const AuxTrainConfig& config) {
  Require(z0.size() == labels.size() && z_u.cols() == static_cast<Eigen::Index>(labels.size()),
          ErrorCode::kShape, "aux training: latent/embedding/label counts differ");
  Require(config.epochs >= 0 && config.batch_size >= 1, ErrorCode::kConfig,
          "aux training: epochs >= 0 and batch_size >= 1 required");
  std::vector<int> y = labels;
  {
    int lo = *std::min_element(y.begin(), y.end()), hi = *std::max_element(y.begin(), y.end());
    Require(lo != hi, ErrorCode::kValidation, "aux training: labels contain a single class");
  }
  Rng rng(config.seed);
  if (config.shuffle_labels) {
    const auto perm = rng.Permutation(static_cast<int>(y.size()));
    std::vector<int> shuffled(y.size());
    for (size_t i = 0; i < y.size(); ++i) shuffled[i] = labels[static_cast<size_t>(perm[i])];
    y = std::move(shuffled);
  }
  const Matrix<float> z = scaler.Apply(z0.values());
  const int n = static_cast<int>(y.size());
  nn::Optimizer<float> opt(nn::OptimizerConfig{.kind = nn::OptimizerKind::kAdam, .lr = config.lr});
  auto params = eta.Parameters();
  AuxTrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto perm = rng.Permutation(n);
    for (int start = 0; start < n; start += config.batch_size) {
      const int b = std::min(config.batch_size, n - start);
      Matrix<float> zb(z.rows(), b), ub(z_u.rows(), b);
      std::vector<int> yb(static_cast<size_t>(b));
      for (int j = 0; j < b; ++j) {
        const int i = perm[static_cast<size_t>(start + j)];
        zb.col(j) = z.col(i);
        ub.col(j) = z_u.col(i);
        yb[static_cast<size_t>(j)] = y[static_cast<size_t>(i)];
      }
      eta.ZeroGrad();
      Matrix<float> dlogits;
      const auto ce = nn::SoftmaxCrossEntropy(eta.Forward(ub, zb), yb, &dlogits);
      eta.Backward(dlogits);
      opt.Step(params);
      result.loss_history.push_back(ce.loss);
    }
  }
  const auto pred = nn::ArgMax(eta.Logits(z_u, z));
  int correct = 0;
  for (int i = 0; i < n; ++i) correct += pred[static_cast<size_t>(i)] == y[static_cast<size_t>(i)];
  result.train_accuracy = static_cast<double>(correct) / n;
  return result;
}

double AuxAccuracy(const AuxPrivacyClassifier<float>& eta, const vae::CleanLatents& z0,
                   const diffusion::LatentScaler& scaler, const Matrix<float>& z_u,
                   const std::vector<int>& labels) {
  Require(z0.size() == labels.size() && !labels.empty(), ErrorCode::kShape,
          "aux accuracy: latent/label counts differ");
  const auto pred = nn::ArgMax(eta.Logits(z_u, scaler.Apply(z0.values())));
  int correct = 0;
  for (size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

Matrix<float> CcfgEps(const diffusion::UNet1d<float>& unet, const Matrix<float>& z_t, int t,
                      const Matrix<float>& z_u, double w_u) {
  const Matrix<float> cond = unet.Infer(z_t, t, z_u);
  if (w_u == 0.0) return cond;
  // Separate passes keep each branch bit-identical to a standalone call.
  const Matrix<float> uncond = unet.Infer(z_t, t, Matrix<float>::Zero(z_u.rows(), z_u.cols()));
  const float a = static_cast<float>(1.0 + w_u);
  const float w = static_cast<float>(w_u);
  return a * cond - w * uncond;
}

Matrix<float> PrivacyGrad(const AuxPrivacyClassifier<float>& eta, const Matrix<float>& z_t, int t,
                          const Matrix<float>& z_u, std::span<const int> s_true,
                          const Matrix<float>& eps_bar, const diffusion::NoiseSchedule& schedule) {
  const double ab = schedule.AlphaBar(t);
  const Matrix<float> z0_hat = diffusion::PredictZ0<float>(z_t, eps_bar, t, schedule);
  return eta.LogProbGradLatent(z_u, z0_hat, s_true) * static_cast<float>(1.0 / std::sqrt(ab));
}

namespace {

double SecondsSince(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// GuidedEpsMulti with optional wall-clock accounting of the UNet passes and
// the classifier gradients.
Matrix<float> GuidedEpsTimed(const diffusion::UNet1d<float>& unet,
                             const std::vector<Negation>& negations, const Matrix<float>& z_t,
                             int t, const Matrix<float>& z_u, double w_u,
                             const diffusion::NoiseSchedule& schedule, StageTimings* timings) {
  auto start = std::chrono::steady_clock::now();
  const Matrix<float> eps_bar = CcfgEps(unet, z_t, t, z_u, w_u);
  if (timings != nullptr) {
    timings->unet += SecondsSince(start);
    start = std::chrono::steady_clock::now();
  }
  Matrix<float> out = eps_bar;
  const double sigma = std::sqrt(1.0 - schedule.AlphaBar(t));
  for (const auto& neg : negations) {
    if (neg.w_s == 0.0) continue;
    Require(neg.eta != nullptr, ErrorCode::kConfig, "negation without a classifier");
    out += static_cast<float>(neg.w_s * sigma) *
           PrivacyGrad(*neg.eta, z_t, t, z_u, neg.s_true, eps_bar, schedule);
  }
  if (timings != nullptr) timings->aux_private += SecondsSince(start);
  return out;
}

}  // namespace

Matrix<float> GuidedEpsMulti(const diffusion::UNet1d<float>& unet,
                             const std::vector<Negation>& negations, const Matrix<float>& z_t,
                             int t, const Matrix<float>& z_u, double w_u,
                             const diffusion::NoiseSchedule& schedule) {
  return GuidedEpsTimed(unet, negations, z_t, t, z_u, w_u, schedule, nullptr);
}

Matrix<float> GuidedEps(const diffusion::UNet1d<float>& unet,
                        const AuxPrivacyClassifier<float>& eta, const Matrix<float>& z_t, int t,
                        const Matrix<float>& z_u, std::span<const int> s_true, double w_u,
                        double w_s, const diffusion::NoiseSchedule& schedule) {
  std::vector<Negation> negs{{&eta, std::vector<int>(s_true.begin(), s_true.end()), w_s}};
  return GuidedEpsMulti(unet, negs, z_t, t, z_u, w_u, schedule);
}

GuidanceSpec GuidanceSpec::MotionSenseLike(const std::string& attribute) {
  return {4.5, {{attribute, 0.008}}};
}

std::vector<std::string> GuidanceSpec::Warnings() const {
  std::vector<std::string> out;
  if (w_u < 0.0 || w_u > 9.0) {
    std::ostringstream os;
    os << "w_U = " << w_u << " is outside the swept range [0, 9]";
    out.push_back(os.str());
  }
  for (const auto& n : negations) {
    if (n.w_s < 0.0 || n.w_s > 0.1) {
      std::ostringstream os;
      os << "w_S[" << n.attribute << "] = " << n.w_s << " is outside the swept range [0, 0.1]";
      out.push_back(os.str());
    }
  }
  return out;
}

void Bundle::Validate() const {
  const int latent = vae.latent_dim();
  const auto& u = ldm.unet.config();
  Require(u.latent_dim == latent, ErrorCode::kConfig,
          "bundle: LDM latent dim " + std::to_string(u.latent_dim) + " != VAE latent dim " +
              std::to_string(latent));
  Require(u.cond_dim == encoder.embed_dim(), ErrorCode::kConfig,
          "bundle: LDM cond dim does not match the public encoder embedding");
  Require(encoder.config().channels * encoder.config().window_len == vae.config().input_dim,
          ErrorCode::kConfig, "bundle: encoder and VAE disagree on the input shape");
  Require(ldm.scaler.dim() == latent, ErrorCode::kConfig, "bundle: latent scaler dim mismatch");
  for (const auto& [name, eta] : aux) {
    Require(eta.config().latent_dim == latent && eta.config().cond_dim == encoder.embed_dim(),
            ErrorCode::kConfig, "bundle: aux classifier '" + name + "' shape mismatch");
  }
}

ObfuscationTrace ObfuscateWithTrace(const Bundle& bundle, const ObfuscationRequest& request,
                                    const GuidanceSpec& spec, const ObfuscateOptions& options) {
  bundle.Validate();
  Require(request.features.rows() == bundle.vae.config().input_dim, ErrorCode::kConfig,
          "obfuscate: input feature size does not match the bundle");
  Require(options.batch_size >= 1, ErrorCode::kConfig, "obfuscate: batch_size must be >= 1");
  const Eigen::Index n = request.features.cols();
  for (const auto& neg : spec.negations) {
    Require(bundle.aux.count(neg.attribute) == 1, ErrorCode::kSchema,
            "no aux privacy classifier for attribute '" + neg.attribute + "'");
    if (neg.w_s == 0.0) continue;
    const auto it = request.s_true.find(neg.attribute);
    Require(it != request.s_true.end() && it->second.size() == static_cast<size_t>(n),
            ErrorCode::kSchema, "obfuscate: missing true labels for '" + neg.attribute + "'");
  }
  const auto& sched = bundle.ldm.schedule;
  const auto timesteps = sched.DdimTimesteps(options.ddim_steps);
  const int latent = bundle.vae.latent_dim();

  StageTimings* timings = options.timings;
  const auto total_start = std::chrono::steady_clock::now();
  ObfuscationTrace trace;
  trace.z_u = contrastive::EmbedPublic(bundle.encoder, request.features);
  if (timings != nullptr) timings->aux_public += SecondsSince(total_start);
  trace.z0_diffusion.resize(latent, n);
  trace.output.resize(request.features.rows(), n);
  for (Eigen::Index start = 0; start < n; start += options.batch_size) {
    const Eigen::Index b = std::min<Eigen::Index>(options.batch_size, n - start);
    Matrix<float> z_T(latent, b);
    for (Eigen::Index j = 0; j < b; ++j) {
      Rng rng(DeriveSeed(options.seed, options.first_index + static_cast<uint64_t>(start + j)));
      z_T.col(j) = rng.NormalMatrix<float>(latent, 1);
    }
    const Matrix<float> z_u = trace.z_u.middleCols(start, b);
    std::vector<Negation> negs;
    for (const auto& neg : spec.negations) {
      Negation g;
      g.eta = &bundle.aux.at(neg.attribute);
      g.w_s = neg.w_s;
      if (neg.w_s != 0.0) {
        const auto& s = request.s_true.at(neg.attribute);
        g.s_true.assign(s.begin() + start, s.begin() + start + b);
      }
      negs.push_back(std::move(g));
    }
    const diffusion::EpsFn eps_fn = [&](const Matrix<float>& z_t, int t) {
      return GuidedEpsTimed(bundle.ldm.unet, negs, z_t, t, z_u, spec.w_u, sched, timings);
    };
    const Matrix<float> z0 = diffusion::DdimSample(z_T, timesteps, sched, eps_fn);
    trace.z0_diffusion.middleCols(start, b) = z0;
    const auto decode_start = std::chrono::steady_clock::now();
    trace.output.middleCols(start, b) = bundle.vae.Decode(bundle.ldm.scaler.Invert(z0));
    if (timings != nullptr) timings->decoder += SecondsSince(decode_start);
  }
  if (timings != nullptr) timings->total += SecondsSince(total_start);
  return trace;
}

Eigen::MatrixXf Obfuscate(const Bundle& bundle, const ObfuscationRequest& request,
                          const GuidanceSpec& spec, const ObfuscateOptions& options) {
  return ObfuscateWithTrace(bundle, request, spec, options).output;
}

nn::Checkpoint AuxToCheckpoint(const AuxPrivacyClassifier<float>& eta,
                               const std::string& attribute) {
  const auto& c = eta.config();
  nlohmann::json meta = {{"tool_version", kToolVersion}, {"attribute", attribute},
                         {"cond_dim", c.cond_dim},       {"latent_dim", c.latent_dim},
                         {"classes", c.classes},         {"hidden", c.hidden}};
  nn::Checkpoint ckpt;
  ckpt.kind = kAuxKind;
  ckpt.metadata = meta.dump();
  ckpt.tensors = nn::CaptureParameters(eta);
  return ckpt;
}

AuxPrivacyClassifier<float> AuxFromCheckpoint(const nn::Checkpoint& ckpt, std::string* attribute) {
  Require(ckpt.kind == kAuxKind, ErrorCode::kConfig, "checkpoint is not an aux classifier");
  AuxPrivacyConfig c;
  std::string attr;
  try {
    const auto meta = nlohmann::json::parse(ckpt.metadata);
    attr = meta.at("attribute").get<std::string>();
    c.cond_dim = meta.at("cond_dim").get<int>();
    c.latent_dim = meta.at("latent_dim").get<int>();
    c.classes = meta.at("classes").get<int>();
    c.hidden = meta.at("hidden").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kFormat, std::string("aux checkpoint metadata: ") + e.what());
  }
  if (attribute != nullptr) *attribute = attr;
  Rng rng(0);
  AuxPrivacyClassifier<float> eta(c, rng);
  nn::RestoreParameters(ckpt.tensors, eta);
  return eta;
}

}  // namespace veil::guidance
