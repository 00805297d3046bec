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

#include "veil/pipeline/config.h"

#include <set>
#include <type_traits>

#include <json.hpp>

#include "veil/common/binary_io.h"
#include "veil/common/error.h"
#include "veil/common/rng.h"

namespace veil::pipeline {
namespace {

using nlohmann::json;

// Single field table shared by the reader, the writer and ConfigKeys.
template <typename V>
void VisitFields(V& v, RunConfig& c) {
  v("seed", c.seed);
  v("deterministic", c.deterministic);

  v("data.n_public_classes", c.data.n_public_classes);
  v("data.n_private_classes", c.data.n_private_classes);
  v("data.per_class", c.data.per_class);
  v("data.channels", c.data.channels);
  v("data.window_len", c.data.window_len);
  v("data.noise_std", c.data.noise_std);
  v("data.seed", c.data.seed);
  v("data.split_ratio", c.split_ratio);
  v("data.split_seed", c.split_seed);

  v("vae.hidden", c.vae.hidden);
  v("vae.latent_dim", c.vae.latent_dim);
  v("vae.kl_weight", c.vae.kl_weight);
  v("vae.epochs", c.vae_train.epochs);
  v("vae.batch_size", c.vae_train.batch_size);
  v("vae.lr", c.vae_train.lr);
  v("vae.weight_decay", c.vae_train.weight_decay);
  v("vae.seed", c.vae_train.seed);

  v("contrastive.conv_channels", c.encoder.conv_channels);
  v("contrastive.fc_widths", c.encoder.fc_widths);
  v("contrastive.embed_dim", c.encoder.embed_dim);
  v("contrastive.temperature", c.contrastive.temperature);
  v("contrastive.negatives", c.contrastive.negatives);
  v("contrastive.epochs", c.contrastive.epochs);
  v("contrastive.anchors_per_step", c.contrastive.anchors_per_step);
  v("contrastive.anchors_per_epoch", c.contrastive.anchors_per_epoch);
  v("contrastive.lr", c.contrastive.lr);
  v("contrastive.seed", c.contrastive.seed);

  v("ldm.channels", c.unet.channels);
  v("ldm.groups", c.unet.groups);
  v("ldm.time_dim", c.unet.time_dim);
  v("ldm.context_dim", c.unet.context_dim);
  v("ldm.timesteps", c.schedule.timesteps);
  v("ldm.beta_start", c.schedule.beta_start);
  v("ldm.beta_end", c.schedule.beta_end);
  v("ldm.steps", c.ldm.steps);
  v("ldm.batch_size", c.ldm.batch_size);
  v("ldm.lr", c.ldm.lr);
  v("ldm.lr_min", c.ldm.lr_min);
  v("ldm.weight_decay", c.ldm.weight_decay);
  v("ldm.p_uncond", c.ldm.p_uncond);
  v("ldm.seed", c.ldm.seed);

  v("aux.hidden", c.aux.hidden);
  v("aux.epochs", c.aux_train.epochs);
  v("aux.batch_size", c.aux_train.batch_size);
  v("aux.lr", c.aux_train.lr);
  v("aux.seed", c.aux_train.seed);

  v("eval.epochs", c.eval.epochs);
  v("eval.batch_size", c.eval.batch_size);
  v("eval.lr", c.eval.lr);
  v("eval.seed", c.eval.seed);

  v("obfuscate.w_u", c.obfuscate.w_u);
  v("obfuscate.w_s", c.obfuscate.w_s);
  v("obfuscate.seed", c.obfuscate.seed);
  v("obfuscate.batch_size", c.obfuscate.batch_size);
  v("obfuscate.ddim_steps", c.obfuscate.ddim_steps);

  v("sweep.w_u_grid", c.sweep.w_u_grid);
  v("sweep.w_s_grid", c.sweep.w_s_grid);
  v("sweep.attribute", c.sweep.attribute);
  v("sweep.max_segments", c.sweep.max_segments);

  v("mine.hidden", c.mine.hidden);
  v("mine.steps", c.mine.steps);
  v("mine.batch_size", c.mine.batch_size);
  v("mine.lr", c.mine.lr);
  v("mine.ema_decay", c.mine.ema_decay);
  v("mine.holdout_fraction", c.mine.holdout_fraction);
  v("mine.eval_permutations", c.mine.eval_permutations);
  v("mine.eval_points", c.mine.eval_points);
  v("mine.seed", c.mine.seed);

  v("bench.n_batches", c.bench.n_batches);
  v("bench.batch_size", c.bench.batch_size);
}

json::json_pointer Pointer(const std::string& dotted) {
  std::string p = "/";
  for (char ch : dotted) p += ch == '.' ? '/' : ch;
  return json::json_pointer(p);
}

template <typename T>
struct IsOptional : std::false_type {};
template <typename T>
struct IsOptional<std::optional<T>> : std::true_type {};

// Type check beyond nlohmann's lenient conversions (no float -> int).
template <typename T>
bool Matches(const json& j) {
  if constexpr (std::is_same_v<T, bool>) {
    return j.is_boolean();
  } else if constexpr (std::is_unsigned_v<T>) {
    return j.is_number_unsigned() || (j.is_number_integer() && j.get<int64_t>() >= 0);
  } else if constexpr (std::is_integral_v<T>) {
    return j.is_number_integer();
  } else if constexpr (std::is_floating_point_v<T>) {
    return j.is_number();
  } else if constexpr (std::is_same_v<T, std::string>) {
    return j.is_string();
  } else if constexpr (std::is_same_v<T, std::map<std::string, double>>) {
    if (!j.is_object()) return false;
    for (const auto& [k, x] : j.items()) {
      if (!x.is_number()) return false;
    }
    return true;
  } else {
    // Sequences of numbers.
    if (!j.is_array()) return false;
    using E = typename T::value_type;
    for (const auto& x : j) {
      if (!Matches<E>(x)) return false;
    }
    return true;
  }
}

class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  template <typename T>
  void operator()(const std::string& key, T& field) {
    const auto ptr = Pointer(key);
    if (!root_.contains(ptr)) return;
    const json& j = root_.at(ptr);
    consumed_.insert(key);
    if constexpr (IsOptional<T>::value) {
      if (j.is_null()) {
        field.reset();
        return;
      }
      using V = typename T::value_type;
      Require(Matches<V>(j), ErrorCode::kConfig, "config key '" + key + "' has the wrong type");
      field = j.get<V>();
    } else {
      Require(Matches<T>(j), ErrorCode::kConfig, "config key '" + key + "' has the wrong type");
      if constexpr (std::is_same_v<T, std::array<int, 3>>) {
        Require(j.size() == 3, ErrorCode::kConfig, "config key '" + key + "' needs 3 entries");
      }
      field = j.get<T>();
    }
  }

  void RejectUnknown(const json& node, const std::string& prefix) const {
    for (const auto& [k, v] : node.items()) {
      const std::string key = prefix.empty() ? k : prefix + "." + k;
      if (consumed_.count(key) != 0) continue;
      if (v.is_object() && IsSection(key)) {
        RejectUnknown(v, key);
        continue;
      }
      Fail(ErrorCode::kConfig, "unknown config key '" + key + "'");
    }
  }

 private:
  static bool IsSection(const std::string& key) {
    for (const auto& k : ConfigKeys()) {
      if (k.rfind(key + ".", 0) == 0) return true;
    }
    return false;
  }

  const json& root_;
  std::set<std::string> consumed_;
};

class Writer {
 public:
  template <typename T>
  void operator()(const std::string& key, const T& field) {
    if constexpr (IsOptional<T>::value) {
      root_[Pointer(key)] = field ? json(*field) : json(nullptr);
    } else {
      root_[Pointer(key)] = field;
    }
  }
  const json& root() const { return root_; }

 private:
  json root_ = json::object();
};

class KeyLister {
 public:
  template <typename T>
  void operator()(const std::string& key, const T&) {
    keys.push_back(key);
  }
  std::vector<std::string> keys;
};

}  // namespace

RunConfig ParseRunConfig(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    Fail(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  Require(root.is_object(), ErrorCode::kConfig, "config must be a JSON object");
  RunConfig config;
  Reader reader(root);
  VisitFields(reader, config);
  reader.RejectUnknown(root, "");
  return config;
}

RunConfig LoadRunConfig(const std::string& path) {
  std::string text;
  try {
    text = ReadFileText(path);
  } catch (const Error& e) {
    Fail(ErrorCode::kConfig, "cannot read config '" + path + "': " + e.what());
  }
  return ParseRunConfig(text);
}

void ResolveSeeds(RunConfig& c) {
  if (!c.seed) return;
  const uint64_t s = *c.seed;
  c.data.seed = s;
  c.split_seed = DeriveSeed(s, 1);
  c.vae_train.seed = DeriveSeed(s, 2);
  c.contrastive.seed = DeriveSeed(s, 3);
  c.ldm.seed = DeriveSeed(s, 4);
  c.aux_train.seed = DeriveSeed(s, 5);
  c.eval.seed = DeriveSeed(s, 6);
  c.obfuscate.seed = DeriveSeed(s, 7);
  c.mine.seed = DeriveSeed(s, 8);
}

void ResolveShapes(RunConfig& c, int channels, int window_len) {
  c.vae.input_dim = channels * window_len;
  c.encoder.channels = channels;
  c.encoder.window_len = window_len;
  c.unet.latent_dim = c.vae.latent_dim;
  c.unet.cond_dim = c.encoder.embed_dim;
  c.aux.latent_dim = c.vae.latent_dim;
  c.aux.cond_dim = c.encoder.embed_dim;
}

std::string RunConfigToJson(const RunConfig& config) {
  Writer w;
  VisitFields(w, const_cast<RunConfig&>(config));
  return w.root().dump();
}

std::vector<std::string> ConfigKeys() {
  KeyLister lister;
  RunConfig c;
  VisitFields(lister, c);
  return lister.keys;
}

}  // namespace veil::pipeline
