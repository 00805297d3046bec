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

#include "veil/nn/checkpoint.h"

#include "veil/common/binary_io.h"
#include "veil/common/error.h"

namespace veil::nn {
namespace {

constexpr char kMagic[4] = {'C', 'L', 'K', 'W'};

}  // namespace

std::vector<uint8_t> SerializeCheckpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.Raw(std::string_view(kMagic, 4));
  w.U32(kCheckpointVersion);
  w.String(ckpt.kind);
  w.String(ckpt.metadata);
  w.U32(static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.String(t.name);
    w.U32(static_cast<uint32_t>(t.dims.size()));
    size_t count = 1;
    for (uint32_t d : t.dims) {
      w.U32(d);
      count *= d;
    }
    Require(count == t.data.size(), ErrorCode::kShape, "tensor '" + t.name + "' size mismatch");
    for (float f : t.data) w.F32(f);
  }
  w.U8(ckpt.optimizer.has_value() ? 1 : 0);
  if (ckpt.optimizer) {
    const auto blob = SerializeOptimizerState(*ckpt.optimizer);
    w.U64(blob.size());
    w.Raw(blob);
  }
  const uint32_t crc = Crc32(w.bytes());
  w.U32(crc);
  return w.Take();
}

Checkpoint DeserializeCheckpoint(std::span<const uint8_t> bytes) {
  Require(bytes.size() >= 12, ErrorCode::kFormat, "checkpoint truncated");
  Require(std::equal(kMagic, kMagic + 4, bytes.begin()), ErrorCode::kFormat,
          "not a checkpoint (bad magic)");
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4));
  Require(tail.U32() == Crc32(body), ErrorCode::kFormat, "checkpoint CRC mismatch");

  ByteReader r(body);
  r.Raw(4);
  const uint32_t version = r.U32();
  Require(version == kCheckpointVersion, ErrorCode::kFormat,
          "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.kind = r.String();
  ckpt.metadata = r.String();
  const uint32_t n = r.U32();
  ckpt.tensors.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.name = r.String();
    const uint32_t ndim = r.U32();
    size_t count = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      t.dims.push_back(r.U32());
      count *= t.dims.back();
    }
    Require(count * 4 <= r.remaining(), ErrorCode::kFormat, "checkpoint tensor truncated");
    t.data.resize(count);
    for (auto& f : t.data) f = r.F32();
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.U8() != 0) {
    const uint64_t len = r.U64();
    Require(len <= r.remaining(), ErrorCode::kFormat, "optimizer blob truncated");
    ckpt.optimizer = DeserializeOptimizerState(r.Raw(static_cast<size_t>(len)));
  }
  Require(r.remaining() == 0, ErrorCode::kFormat, "trailing bytes in checkpoint");
  return ckpt;
}

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  WriteFileBytes(path, SerializeCheckpoint(ckpt));
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path, const std::string& expected_kind) {
  Checkpoint ckpt = DeserializeCheckpoint(ReadFileBytes(path));
  if (!expected_kind.empty() && ckpt.kind != expected_kind) {
    Fail(ErrorCode::kConfig, path.string() + ": expected checkpoint kind '" + expected_kind +
                                 "', found '" + ckpt.kind + "'");
  }
  return ckpt;
}

std::vector<NamedTensor> CaptureParameters(const Module<float>& module) {
  std::vector<NamedTensor> out;
  for (const auto& p : module.Parameters()) {
    const auto& v = p.param->value;
    NamedTensor t;
    t.name = p.name;
    t.dims = {static_cast<uint32_t>(v.rows()), static_cast<uint32_t>(v.cols())};
    t.data.assign(v.data(), v.data() + v.size());
    out.push_back(std::move(t));
  }
  return out;
}

void RestoreParameters(const std::vector<NamedTensor>& tensors, Module<float>& module) {
  auto params = module.Parameters();
  Require(params.size() == tensors.size(), ErrorCode::kConfig,
          "checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
              std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    auto& v = params[i].param->value;
    Require(t.name == params[i].name, ErrorCode::kConfig,
            "checkpoint tensor '" + t.name + "' where model expects '" + params[i].name + "'");
    Require(t.dims.size() == 2 && t.dims[0] == v.rows() && t.dims[1] == v.cols(),
            ErrorCode::kConfig, "checkpoint tensor '" + t.name + "' has the wrong shape");
    std::copy(t.data.begin(), t.data.end(), v.data());
    params[i].param->ZeroGrad();
  }
}

}  // namespace veil::nn
