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

#ifndef VEIL_DATAIO_DATASET_H_
#define VEIL_DATAIO_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace veil::dataio {

// Row-major so that .data() is the channel-major flattening used on disk and
// by every network input (index = channel * window_len + sample).
using SegmentValues = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class AttributeRole : uint8_t { kPublic = 0, kPrivate = 1, kUnspecified = 2 };

struct AttributeSpec {
  std::string name;
  uint32_t cardinality = 0;
  AttributeRole role = AttributeRole::kPrivate;
};

class AttributeSchema {
 public:
  AttributeSchema() = default;
  explicit AttributeSchema(std::vector<AttributeSpec> attributes);

  const std::vector<AttributeSpec>& attributes() const { return attributes_; }
  bool Has(const std::string& name) const;
  // Throws Error(kSchema) when absent.
  const AttributeSpec& Get(const std::string& name) const;
  const AttributeSpec& Public() const;
  std::vector<std::string> NamesWithRole(AttributeRole role) const;

  bool operator==(const AttributeSchema& other) const;

 private:
  std::vector<AttributeSpec> attributes_;
};

struct SensorSegment {
  SegmentValues values;  // channels x window_len
  int public_label = 0;
  std::map<std::string, int> private_labels;
  std::map<std::string, int> unspecified_labels;

  // Label of any attribute by name; throws Error(kSchema) when absent.
  int Label(const std::string& attribute, const AttributeSchema& schema) const;
};

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> degenerate;  // zero-variance channel, zeroed on transform
};

struct Dataset {
  int channels = 0;
  int window_len = 0;
  AttributeSchema schema;
  std::vector<SensorSegment> segments;
  std::optional<ChannelStats> channel_stats;

  size_t size() const { return segments.size(); }
  bool empty() const { return segments.empty(); }
  int feature_size() const { return channels * window_len; }

  // (channels * window_len) x N, one column per segment.
  Eigen::MatrixXf Features() const;
  std::vector<int> Labels(const std::string& attribute) const;
  std::vector<int> PublicLabels() const;

  // Copy with the segment values replaced column-wise by `features`; labels
  // and schema are carried over unchanged.
  Dataset WithFeatures(const Eigen::MatrixXf& features) const;
  Dataset Subset(const std::vector<int>& indices) const;

  // Throws Error(kValidation) when an invariant is broken.
  void Validate() const;
};

struct SynthSpec {
  int n_public_classes = 4;
  int n_private_classes = 2;
  int per_class = 64;  // segments per (public, private) cell
  int channels = 2;
  int window_len = 128;
  double noise_std = 0.05;
  uint64_t seed = 7;

  void Validate() const;
};

inline constexpr const char* kSyntheticPublicName = "activity";
inline constexpr const char* kSyntheticPrivateName = "gender";

// Sinusoids whose frequency encodes the public class and whose amplitude and
// offset encode the private class, with random phase and Gaussian noise.
Dataset GenerateSynthetic(const SynthSpec& spec);

// Sliding windows over a [channels x L] series; window i starts at i*stride.
std::vector<SegmentValues> SegmentSeries(const SegmentValues& series, int window, int stride);

// Per-channel z-score using statistics of `dataset` itself.
Dataset Standardize(const Dataset& dataset);
// Applies previously computed statistics (e.g. train-split stats to a test split).
Dataset ApplyStandardization(const Dataset& dataset, const ChannelStats& stats);

// Stratified on the public label; returns (train, test).
std::pair<Dataset, Dataset> Split(const Dataset& dataset, double ratio, uint64_t seed);

inline constexpr uint32_t kDatasetFormatVersion = 1;

std::vector<uint8_t> SerializeDataset(const Dataset& dataset);
Dataset DeserializeDataset(std::span<const uint8_t> bytes);
void SaveDataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset LoadDataset(const std::filesystem::path& path);

}  // namespace veil::dataio

#endif  // VEIL_DATAIO_DATASET_H_
