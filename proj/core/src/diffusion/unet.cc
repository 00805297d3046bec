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

#include "veil/diffusion/unet.h"

#include "veil/common/error.h"
#include "veil/nn/functional.h"

namespace veil::diffusion {
namespace {

nn::Conv1dShape Conv(int cin, int cout, int length, int kernel = 3, int stride = 1) {
  return {.in_channels = cin,
          .out_channels = cout,
          .kernel = kernel,
          .stride = stride,
          .padding = nn::Padding::kSame,
          .in_length = length};
}

template <typename T>
Matrix<T> StackRows(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

}  // namespace

void UNetConfig::Validate() const {
  Require(latent_dim >= 4 && latent_dim % 4 == 0, ErrorCode::kConfig,
          "UNet latent_dim must be a positive multiple of 4 (two x2 downsamplings)");
  Require(cond_dim >= 1 && time_dim >= 2 && time_dim % 2 == 0 && context_dim >= 1,
          ErrorCode::kConfig, "UNet cond/time/context dims invalid");
  for (int c : channels) {
    Require(c >= 1 && c % groups == 0, ErrorCode::kConfig,
            "UNet channel widths must be divisible by the group count");
  }
}

template <typename T>
ResBlock1d<T>::ResBlock1d(int in_channels, int out_channels, int length, int groups,
                          int context_dim, Rng& rng)
    : norm1_(in_channels, length, groups, context_dim, rng),
      conv1_(Conv(in_channels, out_channels, length), rng),
      norm2_(out_channels, length, groups, context_dim, rng),
      conv2_(Conv(out_channels, out_channels, length), rng) {
  if (in_channels != out_channels) skip_.emplace(Conv(in_channels, out_channels, length, 1), rng);
}

template <typename T>
Matrix<T> ResBlock1d<T>::Infer(const Matrix<T>& h, const Matrix<T>& ctx) const {
  Matrix<T> y = conv1_.Infer(act1_.Infer(norm1_.Infer(h, ctx)));
  y = conv2_.Infer(act2_.Infer(norm2_.Infer(y, ctx)));
  return y + (skip_ ? skip_->Infer(h) : h);
}

template <typename T>
Matrix<T> ResBlock1d<T>::Forward(const Matrix<T>& h, const Matrix<T>& ctx) {
  Matrix<T> y = conv1_.Forward(act1_.Forward(norm1_.Forward(h, ctx)));
  y = conv2_.Forward(act2_.Forward(norm2_.Forward(y, ctx)));
  return y + (skip_ ? skip_->Forward(h) : h);
}

template <typename T>
std::pair<Matrix<T>, Matrix<T>> ResBlock1d<T>::Backward(const Matrix<T>& dy) {
  auto [dmid, dctx2] = norm2_.Backward(act2_.Backward(conv2_.Backward(dy)));
  auto [dh, dctx1] = norm1_.Backward(act1_.Backward(conv1_.Backward(dmid)));
  dh += skip_ ? skip_->Backward(dy) : dy;
  return {std::move(dh), dctx1 + dctx2};
}

template <typename T>
void ResBlock1d<T>::CollectParameters(const std::string& prefix, nn::ParameterList<T>& out) {
  norm1_.CollectParameters(nn::JoinName(prefix, "norm1"), out);
  conv1_.CollectParameters(nn::JoinName(prefix, "conv1"), out);
  norm2_.CollectParameters(nn::JoinName(prefix, "norm2"), out);
  conv2_.CollectParameters(nn::JoinName(prefix, "conv2"), out);
  if (skip_) skip_->CollectParameters(nn::JoinName(prefix, "skip"), out);
}

template <typename T>
UNet1d<T>::UNet1d(const UNetConfig& config, Rng& rng)
    : config_((config.Validate(), config)),
      conv_in_(Conv(1, config.channels[0], config.latent_dim), rng),
      down0_(config.channels[0], config.channels[0], config.latent_dim, config.groups,
             config.context_dim, rng),
      pool0_(Conv(config.channels[0], config.channels[0], config.latent_dim, 3, 2), rng),
      down1_(config.channels[0], config.channels[1], config.latent_dim / 2, config.groups,
             config.context_dim, rng),
      pool1_(Conv(config.channels[1], config.channels[1], config.latent_dim / 2, 3, 2), rng),
      mid0_(config.channels[1], config.channels[2], config.latent_dim / 4, config.groups,
            config.context_dim, rng),
      mid1_(config.channels[2], config.channels[2], config.latent_dim / 4, config.groups,
            config.context_dim, rng),
      up1_(config.channels[2], config.latent_dim / 4),
      up1_block_(config.channels[2] + config.channels[1], config.channels[1],
                 config.latent_dim / 2, config.groups, config.context_dim, rng),
      up0_(config.channels[1], config.latent_dim / 2),
      up0_block_(config.channels[1] + config.channels[0], config.channels[0], config.latent_dim,
                 config.groups, config.context_dim, rng),
      out_norm_(config.channels[0], config.latent_dim, config.groups, config.context_dim, rng),
      conv_out_(Conv(config.channels[0], 1, config.latent_dim), rng) {
  context_.template Add<nn::Dense<T>>(config.time_dim + config.cond_dim, config.context_dim, rng);
  context_.template Add<nn::SiLU<T>>();
  context_.template Add<nn::Dense<T>>(config.context_dim, config.context_dim, rng);
  context_.template Add<nn::SiLU<T>>();
}

template <typename T>
Matrix<T> UNet1d<T>::ContextInput(const Matrix<T>& z_t, std::span<const int> t,
                                  const Matrix<T>& cond) const {
  Require(z_t.rows() == config_.latent_dim, ErrorCode::kShape,
          "UNet: latent has " + std::to_string(z_t.rows()) + " rows, expected " +
              std::to_string(config_.latent_dim));
  Require(cond.rows() == config_.cond_dim && cond.cols() == z_t.cols(), ErrorCode::kShape,
          "UNet: conditioning shape mismatch");
  Require(static_cast<size_t>(z_t.cols()) == t.size(), ErrorCode::kShape,
          "UNet: one timestep per column required");
  return StackRows<T>(nn::TimeEmbeddings<T>(t, config_.time_dim), cond);
}

template <typename T>
Matrix<T> UNet1d<T>::Infer(const Matrix<T>& z_t, std::span<const int> t,
                           const Matrix<T>& cond) const {
  const Matrix<T> ctx = context_.Infer(ContextInput(z_t, t, cond));
  const Matrix<T> s0 = down0_.Infer(conv_in_.Infer(z_t), ctx);
  const Matrix<T> s1 = down1_.Infer(pool0_.Infer(s0), ctx);
  Matrix<T> h = mid1_.Infer(mid0_.Infer(pool1_.Infer(s1), ctx), ctx);
  h = up1_block_.Infer(StackRows<T>(up1_.Infer(h), s1), ctx);
  h = up0_block_.Infer(StackRows<T>(up0_.Infer(h), s0), ctx);
  return conv_out_.Infer(out_act_.Infer(out_norm_.Infer(h, ctx)));
}

template <typename T>
Matrix<T> UNet1d<T>::Infer(const Matrix<T>& z_t, int t, const Matrix<T>& cond) const {
  const std::vector<int> ts(static_cast<size_t>(z_t.cols()), t);
  return Infer(z_t, ts, cond);
}

template <typename T>
Matrix<T> UNet1d<T>::Forward(const Matrix<T>& z_t, std::span<const int> t,
                             const Matrix<T>& cond) {
  const Matrix<T> ctx = context_.Forward(ContextInput(z_t, t, cond));
  const Matrix<T> s0 = down0_.Forward(conv_in_.Forward(z_t), ctx);
  const Matrix<T> s1 = down1_.Forward(pool0_.Forward(s0), ctx);
  Matrix<T> h = mid1_.Forward(mid0_.Forward(pool1_.Forward(s1), ctx), ctx);
  h = up1_block_.Forward(StackRows<T>(up1_.Forward(h), s1), ctx);
  h = up0_block_.Forward(StackRows<T>(up0_.Forward(h), s0), ctx);
  return conv_out_.Forward(out_act_.Forward(out_norm_.Forward(h, ctx)));
}

template <typename T>
std::pair<Matrix<T>, Matrix<T>> UNet1d<T>::Backward(const Matrix<T>& deps) {
  const int len = config_.latent_dim;
  const auto& ch = config_.channels;

  auto [dh, dctx] = out_norm_.Backward(out_act_.Backward(conv_out_.Backward(deps)));

  auto [dcat0, dc0] = up0_block_.Backward(dh);
  dctx += dc0;
  Matrix<T> ds0 = dcat0.bottomRows(ch[0] * len);
  const Matrix<T> dv1 = up0_.Backward(dcat0.topRows(ch[1] * len));

  auto [dcat1, dc1] = up1_block_.Backward(dv1);
  dctx += dc1;
  Matrix<T> ds1 = dcat1.bottomRows(ch[1] * (len / 2));
  const Matrix<T> dm1 = up1_.Backward(dcat1.topRows(ch[2] * (len / 2)));

  auto [dm0, dc2] = mid1_.Backward(dm1);
  dctx += dc2;
  auto [dp1, dc3] = mid0_.Backward(dm0);
  dctx += dc3;
  ds1 += pool1_.Backward(dp1);

  auto [dp0, dc4] = down1_.Backward(ds1);
  dctx += dc4;
  ds0 += pool0_.Backward(dp0);

  auto [dh0, dc5] = down0_.Backward(ds0);
  dctx += dc5;
  Matrix<T> dz = conv_in_.Backward(dh0);

  const Matrix<T> dctx_in = context_.Backward(dctx);
  return {std::move(dz), dctx_in.bottomRows(config_.cond_dim)};
}

template <typename T>
void UNet1d<T>::CollectParameters(const std::string& prefix, nn::ParameterList<T>& out) {
  context_.CollectParameters(nn::JoinName(prefix, "context"), out);
  conv_in_.CollectParameters(nn::JoinName(prefix, "conv_in"), out);
  down0_.CollectParameters(nn::JoinName(prefix, "down0"), out);
  pool0_.CollectParameters(nn::JoinName(prefix, "pool0"), out);
  down1_.CollectParameters(nn::JoinName(prefix, "down1"), out);
  pool1_.CollectParameters(nn::JoinName(prefix, "pool1"), out);
  mid0_.CollectParameters(nn::JoinName(prefix, "mid0"), out);
  mid1_.CollectParameters(nn::JoinName(prefix, "mid1"), out);
  up1_block_.CollectParameters(nn::JoinName(prefix, "up1"), out);
  up0_block_.CollectParameters(nn::JoinName(prefix, "up0"), out);
  out_norm_.CollectParameters(nn::JoinName(prefix, "out_norm"), out);
  conv_out_.CollectParameters(nn::JoinName(prefix, "conv_out"), out);
}

template class ResBlock1d<float>;
template class ResBlock1d<double>;
template class UNet1d<float>;
template class UNet1d<double>;

}  // namespace veil::diffusion
