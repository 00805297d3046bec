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

#ifndef VEIL_COMMON_BINARY_IO_H_
#define VEIL_COMMON_BINARY_IO_H_

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace veil {

// Little-endian byte sink. All multi-byte values are written LE regardless
// of host order.
class ByteWriter {
 public:
  void U8(uint8_t v) { bytes_.push_back(v); }
  void U32(uint32_t v) { PutLe(v); }
  void U64(uint64_t v) { PutLe(v); }
  void F32(float v);
  void F64(double v);
  void Raw(std::span<const uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
  void Raw(std::string_view data) {
    bytes_.insert(bytes_.end(), data.begin(), data.end());
  }
  // u32 length prefix followed by the UTF-8 bytes.
  void String(std::string_view s);

  const std::vector<uint8_t>& bytes() const { return bytes_; }
  std::vector<uint8_t> Take() { return std::move(bytes_); }

 private:
  template <typename U>
  void PutLe(U v) {
    for (size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }

  std::vector<uint8_t> bytes_;
};

// Bounds-checked little-endian reader. Throws Error(kFormat) on truncation.
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  uint8_t U8();
  uint32_t U32();
  uint64_t U64();
  float F32();
  double F64();
  std::string String();
  std::span<const uint8_t> Raw(size_t n);

  size_t position() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }

 private:
  void Need(size_t n) const;
  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

std::vector<uint8_t> ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path, std::span<const uint8_t> bytes);
std::string ReadFileText(const std::filesystem::path& path);
void WriteFileText(const std::filesystem::path& path, std::string_view text);

uint32_t Crc32(std::span<const uint8_t> data);

// Lower-case hex SHA-256.
std::string Sha256Hex(std::span<const uint8_t> data);
std::string Sha256Hex(std::string_view data);
std::string FileDigest(const std::filesystem::path& path);

}  // namespace veil

#endif  // VEIL_COMMON_BINARY_IO_H_
