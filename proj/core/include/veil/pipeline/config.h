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

#ifndef VEIL_PIPELINE_CONFIG_H_
#define VEIL_PIPELINE_CONFIG_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "veil/audit/audit.h"
#include "veil/contrastive/contrastive.h"
#include "veil/dataio/dataset.h"
#include "veil/diffusion/ldm.h"
#include "veil/diffusion/schedule.h"
#include "veil/diffusion/unet.h"
#include "veil/guidance/guidance.h"
#include "veil/vae/vae.h"

namespace veil::pipeline {

struct ScheduleConfig {
  int timesteps = diffusion::kDefaultTimesteps;
  double beta_start = diffusion::kDefaultBetaStart;
  double beta_end = diffusion::kDefaultBetaEnd;
};

struct ObfuscateConfig {
  double w_u = 4.5;
  std::map<std::string, double> w_s;  // by private attribute
  uint64_t seed = 17;
  int batch_size = 128;
  int ddim_steps = diffusion::kDefaultDdimSteps;
};

struct SweepConfig {
  std::vector<double> w_u_grid = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<double> w_s_grid = {0.0, 0.002, 0.004, 0.008};
  std::string attribute;  // empty: the first private attribute
  int max_segments = 0;   // 0: the whole test split
};

struct BenchConfig {
  int n_batches = 2;
  int batch_size = 128;
};

// Every tunable of every stage. Field names map one-to-one onto JSON keys
// `section.field`; see ConfigKeys().
struct RunConfig {
  // Master seed; when set it overrides every stage seed (see ResolveSeeds).
  std::optional<uint64_t> seed;
  bool deterministic = false;

  dataio::SynthSpec data;
  double split_ratio = 0.8;
  uint64_t split_seed = 2;

  vae::VaeConfig vae;  // input_dim is derived from the data shape
  vae::VaeTrainConfig vae_train;
  contrastive::PublicEncoderConfig encoder;  // channels/window from the data
  contrastive::ContrastiveConfig contrastive;
  diffusion::UNetConfig unet;  // latent/cond dims from vae/encoder
  ScheduleConfig schedule;
  diffusion::LdmTrainConfig ldm;
  guidance::AuxPrivacyConfig aux;  // dims from vae/encoder, classes from schema
  guidance::AuxTrainConfig aux_train;
  audit::EvalTrainConfig eval;
  ObfuscateConfig obfuscate;
  SweepConfig sweep;
  audit::MineConfig mine;
  BenchConfig bench;
};

// Strict parse: unknown keys and type mismatches raise Error(kConfig) naming
// the dotted key. Missing keys keep their defaults.
RunConfig ParseRunConfig(const std::string& json_text);
RunConfig LoadRunConfig(const std::string& path);

// Applies the master seed (when present) to every stage seed.
void ResolveSeeds(RunConfig& config);
// Fills derived shape fields (VAE input size, encoder input, UNet/aux dims).
void ResolveShapes(RunConfig& config, int channels, int window_len);

// Full resolved configuration as a JSON object string (stable key order).
std::string RunConfigToJson(const RunConfig& config);

// Every accepted dotted key, for documentation and tests.
std::vector<std::string> ConfigKeys();

}  // namespace veil::pipeline

#endif  // VEIL_PIPELINE_CONFIG_H_
