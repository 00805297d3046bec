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

#ifndef VEIL_NN_CHECKPOINT_H_
#define VEIL_NN_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "veil/nn/layer.h"
#include "veil/nn/optimizer.h"

namespace veil::nn {

inline constexpr uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<float> data;
};

// On-disk layout (little-endian):
//   "CLKW" | version u32 | kind string | metadata string (JSON text)
//   | tensor count u32 | { name string, ndim u32, dims u32[ndim], f32 data }
//   | has_optimizer u8 | [blob length u64, blob] | CRC32 of all prior bytes.
// Strings are u32-length-prefixed UTF-8.
struct Checkpoint {
  std::string kind;
  std::string metadata = "{}";
  std::vector<NamedTensor> tensors;
  std::optional<OptimizerState<float>> optimizer;
};

std::vector<uint8_t> SerializeCheckpoint(const Checkpoint& ckpt);
// Verifies magic, version and CRC. Throws Error(kFormat).
Checkpoint DeserializeCheckpoint(std::span<const uint8_t> bytes);

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Also checks the kind tag when `expected_kind` is non-empty.
Checkpoint LoadCheckpoint(const std::filesystem::path& path,
                          const std::string& expected_kind = "");

std::vector<NamedTensor> CaptureParameters(const Module<float>& module);
// Copies tensors into the module. Names, order and shapes must match exactly
// (Error(kConfig) otherwise).
void RestoreParameters(const std::vector<NamedTensor>& tensors, Module<float>& module);

}  // namespace veil::nn

#endif  // VEIL_NN_CHECKPOINT_H_
