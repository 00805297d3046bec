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

#include "veil/dataio/dataset.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "veil/common/binary_io.h"
#include "veil/common/error.h"
#include "veil/common/rng.h"

namespace veil::dataio {

namespace {

constexpr char kMagic[4] = {'C', 'L', 'K', '1'};
constexpr double kDegenerateStd = 1e-12;

}  // namespace

AttributeSchema::AttributeSchema(std::vector<AttributeSpec> attributes)
    : attributes_(std::move(attributes)) {
  int n_public = 0;
  for (const auto& a : attributes_) {
    Require(a.cardinality >= 1, ErrorCode::kValidation,
            "attribute '" + a.name + "' must have cardinality >= 1");
    if (a.role == AttributeRole::kPublic) ++n_public;
  }
  Require(n_public <= 1, ErrorCode::kValidation, "schema may declare at most one public attribute");
}

bool AttributeSchema::Has(const std::string& name) const {
  return std::any_of(attributes_.begin(), attributes_.end(),
                     [&](const AttributeSpec& a) { return a.name == name; });
}

const AttributeSpec& AttributeSchema::Get(const std::string& name) const {
  for (const auto& a : attributes_) {
    if (a.name == name) return a;
  }
  Fail(ErrorCode::kSchema, "attribute '" + name + "' not in schema");
}

const AttributeSpec& AttributeSchema::Public() const {
  for (const auto& a : attributes_) {
    if (a.role == AttributeRole::kPublic) return a;
  }
  Fail(ErrorCode::kSchema, "schema has no public attribute");
}

std::vector<std::string> AttributeSchema::NamesWithRole(AttributeRole role) const {
  std::vector<std::string> names;
  for (const auto& a : attributes_) {
    if (a.role == role) names.push_back(a.name);
  }
  return names;
}

bool AttributeSchema::operator==(const AttributeSchema& other) const {
  if (attributes_.size() != other.attributes_.size()) return false;
  for (size_t i = 0; i < attributes_.size(); ++i) {
    const auto& a = attributes_[i];
    const auto& b = other.attributes_[i];
    if (a.name != b.name || a.cardinality != b.cardinality || a.role != b.role) return false;
  }
  return true;
}

int SensorSegment::Label(const std::string& attribute, const AttributeSchema& schema) const {
  const AttributeSpec& spec = schema.Get(attribute);
  switch (spec.role) {
    case AttributeRole::kPublic:
      return public_label;
    case AttributeRole::kPrivate: {
      auto it = private_labels.find(attribute);
      Require(it != private_labels.end(), ErrorCode::kSchema, "segment lacks label " + attribute);
      return it->second;
    }
    case AttributeRole::kUnspecified: {
      auto it = unspecified_labels.find(attribute);
      Require(it != unspecified_labels.end(), ErrorCode::kSchema,
              "segment lacks label " + attribute);
      return it->second;
    }
  }
  Fail(ErrorCode::kInternal, "bad attribute role");
}

Eigen::MatrixXf Dataset::Features() const {
  Eigen::MatrixXf x(feature_size(), static_cast<Eigen::Index>(segments.size()));
  for (size_t j = 0; j < segments.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)) =
        Eigen::Map<const Eigen::VectorXf>(segments[j].values.data(), feature_size());
  }
  return x;
}

std::vector<int> Dataset::Labels(const std::string& attribute) const {
  std::vector<int> labels;
  labels.reserve(segments.size());
  for (const auto& s : segments) labels.push_back(s.Label(attribute, schema));
  return labels;
}

std::vector<int> Dataset::PublicLabels() const {
  std::vector<int> labels;
  labels.reserve(segments.size());
  for (const auto& s : segments) labels.push_back(s.public_label);
  return labels;
}

Dataset Dataset::WithFeatures(const Eigen::MatrixXf& features) const {
  Require(features.rows() == feature_size() &&
              features.cols() == static_cast<Eigen::Index>(segments.size()),
          ErrorCode::kShape, "feature matrix does not match dataset shape");
  Dataset out = *this;
  for (size_t j = 0; j < segments.size(); ++j) {
    Eigen::Map<Eigen::VectorXf>(out.segments[j].values.data(), feature_size()) =
        features.col(static_cast<Eigen::Index>(j));
  }
  return out;
}

Dataset Dataset::Subset(const std::vector<int>& indices) const {
  Dataset out;
  out.channels = channels;
  out.window_len = window_len;
  out.schema = schema;
  out.channel_stats = channel_stats;
  out.segments.reserve(indices.size());
  for (int i : indices) out.segments.push_back(segments.at(static_cast<size_t>(i)));
  return out;
}

void Dataset::Validate() const {
  Require(channels >= 1 && window_len >= 1, ErrorCode::kValidation, "empty segment shape");
  for (const auto& s : segments) {
    Require(s.values.rows() == channels && s.values.cols() == window_len, ErrorCode::kValidation,
            "segment shape differs from dataset shape");
    for (const auto& a : schema.attributes()) {
      const int label = s.Label(a.name, schema);
      Require(label >= 0 && static_cast<uint32_t>(label) < a.cardinality, ErrorCode::kValidation,
              "label of '" + a.name + "' out of range");
    }
    for (const auto& [name, _] : s.private_labels) {
      Require(schema.Has(name), ErrorCode::kValidation, "label key '" + name + "' not in schema");
    }
    for (const auto& [name, _] : s.unspecified_labels) {
      Require(schema.Has(name), ErrorCode::kValidation, "label key '" + name + "' not in schema");
    }
  }
}

void SynthSpec::Validate() const {
  Require(n_public_classes >= 1 && n_private_classes >= 1 && per_class >= 1 && channels >= 1 &&
              window_len >= 1,
          ErrorCode::kValidation, "synthetic spec counts must be >= 1");
  Require(noise_std >= 0.0 && std::isfinite(noise_std), ErrorCode::kValidation,
          "synthetic noise_std must be >= 0");
}

Dataset GenerateSynthetic(const SynthSpec& spec) {
  spec.Validate();
  Dataset ds;
  ds.channels = spec.channels;
  ds.window_len = spec.window_len;
  ds.schema = AttributeSchema({
      {kSyntheticPublicName, static_cast<uint32_t>(spec.n_public_classes), AttributeRole::kPublic},
      {kSyntheticPrivateName, static_cast<uint32_t>(spec.n_private_classes),
       AttributeRole::kPrivate},
  });

  Rng rng(spec.seed);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int u = 0; u < spec.n_public_classes; ++u) {
    const double cycles = 2.0 + 2.0 * u;
    for (int s = 0; s < spec.n_private_classes; ++s) {
      const double level =
          spec.n_private_classes > 1 ? static_cast<double>(s) / (spec.n_private_classes - 1) : 0.5;
      const double amplitude = 0.6 + 0.8 * level;
      const double offset = -0.5 + level;
      for (int i = 0; i < spec.per_class; ++i) {
        SensorSegment seg;
        seg.values.resize(spec.channels, spec.window_len);
        seg.public_label = u;
        seg.private_labels[kSyntheticPrivateName] = s;
        const double phase = rng.Uniform(0.0, two_pi);
        const double jitter = rng.Uniform(0.95, 1.05);
        for (int c = 0; c < spec.channels; ++c) {
          const double gain = std::max(0.4, 1.0 - 0.2 * c);
          for (int l = 0; l < spec.window_len; ++l) {
            const double arg = two_pi * cycles * l / spec.window_len + phase + c * std::numbers::pi / 2;
            const double v =
                amplitude * jitter * gain * std::sin(arg) + offset + spec.noise_std * rng.Normal();
            seg.values(c, l) = static_cast<float>(v);
          }
        }
        ds.segments.push_back(std::move(seg));
      }
    }
  }
  return ds;
}

std::vector<SegmentValues> SegmentSeries(const SegmentValues& series, int window, int stride) {
  Require(window >= 1, ErrorCode::kValidation, "window must be >= 1");
  Require(stride >= 1, ErrorCode::kValidation, "stride must be >= 1");
  const int length = static_cast<int>(series.cols());
  Require(length >= window, ErrorCode::kValidation,
          "series length " + std::to_string(length) + " shorter than window " +
              std::to_string(window) + ": no windows");
  const int count = (length - window) / stride + 1;
  std::vector<SegmentValues> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    out.emplace_back(series.middleCols(static_cast<Eigen::Index>(i) * stride, window));
  }
  return out;
}

Dataset Standardize(const Dataset& dataset) {
  Require(!dataset.empty(), ErrorCode::kValidation, "cannot standardize an empty dataset");
  ChannelStats stats;
  stats.mean.assign(dataset.channels, 0.0);
  stats.stddev.assign(dataset.channels, 0.0);
  stats.degenerate.assign(dataset.channels, false);
  const double n = static_cast<double>(dataset.size()) * dataset.window_len;
  for (int c = 0; c < dataset.channels; ++c) {
    double sum = 0.0;
    for (const auto& s : dataset.segments) {
      for (int l = 0; l < dataset.window_len; ++l) sum += s.values(c, l);
    }
    const double mean = sum / n;
    double sq = 0.0;
    for (const auto& s : dataset.segments) {
      for (int l = 0; l < dataset.window_len; ++l) {
        const double d = s.values(c, l) - mean;
        sq += d * d;
      }
    }
    const double sd = std::sqrt(sq / n);
    stats.mean[c] = mean;
    stats.stddev[c] = sd;
    stats.degenerate[c] = sd < kDegenerateStd;
  }
  return ApplyStandardization(dataset, stats);
}

Dataset ApplyStandardization(const Dataset& dataset, const ChannelStats& stats) {
  Require(static_cast<int>(stats.mean.size()) == dataset.channels &&
              static_cast<int>(stats.stddev.size()) == dataset.channels &&
              static_cast<int>(stats.degenerate.size()) == dataset.channels,
          ErrorCode::kShape, "channel stats do not match dataset channels");
  Dataset out = dataset;
  for (auto& s : out.segments) {
    for (int c = 0; c < out.channels; ++c) {
      for (int l = 0; l < out.window_len; ++l) {
        s.values(c, l) = stats.degenerate[c]
                             ? 0.0f
                             : static_cast<float>((s.values(c, l) - stats.mean[c]) / stats.stddev[c]);
      }
    }
  }
  out.channel_stats = stats;
  return out;
}

std::pair<Dataset, Dataset> Split(const Dataset& dataset, double ratio, uint64_t seed) {
  Require(ratio > 0.0 && ratio < 1.0, ErrorCode::kValidation, "split ratio must be in (0, 1)");
  const int n_classes = static_cast<int>(dataset.schema.Public().cardinality);
  std::vector<std::vector<int>> by_class(n_classes);
  for (size_t i = 0; i < dataset.size(); ++i) {
    by_class.at(static_cast<size_t>(dataset.segments[i].public_label)).push_back(static_cast<int>(i));
  }

  // Largest-remainder allocation so the train total is round(ratio * N) and
  // every class is within one segment of its exact proportional share.
  std::vector<int> n_train(n_classes, 0);
  std::vector<std::pair<double, int>> remainders;
  int allocated = 0;
  int present = 0;
  for (int c = 0; c < n_classes; ++c) {
    const int n = static_cast<int>(by_class[c].size());
    if (n == 0) continue;
    ++present;
    Require(n >= 2, ErrorCode::kValidation,
            "class " + std::to_string(c) + " has fewer than 2 segments; cannot stratify");
    const double exact = ratio * n;
    n_train[c] = static_cast<int>(std::floor(exact));
    allocated += n_train[c];
    remainders.emplace_back(exact - n_train[c], c);
  }
  Require(present > 0, ErrorCode::kValidation, "cannot split an empty dataset");
  const int target = static_cast<int>(std::lround(ratio * static_cast<double>(dataset.size())));
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t k = 0; allocated < target && k < remainders.size(); ++k) {
    ++n_train[remainders[k].second];
    ++allocated;
  }
  for (int c = 0; c < n_classes; ++c) {
    const int n = static_cast<int>(by_class[c].size());
    if (n == 0) continue;
    n_train[c] = std::clamp(n_train[c], 1, n - 1);
  }

  Rng rng(seed);
  std::vector<int> train_idx, test_idx;
  for (int c = 0; c < n_classes; ++c) {
    auto& members = by_class[c];
    const auto perm = rng.Permutation(static_cast<int>(members.size()));
    for (size_t k = 0; k < members.size(); ++k) {
      const int idx = members[static_cast<size_t>(perm[k])];
      (static_cast<int>(k) < n_train[c] ? train_idx : test_idx).push_back(idx);
    }
  }
  const auto train_perm = rng.Permutation(static_cast<int>(train_idx.size()));
  const auto test_perm = rng.Permutation(static_cast<int>(test_idx.size()));
  std::vector<int> train_order, test_order;
  for (int p : train_perm) train_order.push_back(train_idx[static_cast<size_t>(p)]);
  for (int p : test_perm) test_order.push_back(test_idx[static_cast<size_t>(p)]);
  return {dataset.Subset(train_order), dataset.Subset(test_order)};
}

std::vector<uint8_t> SerializeDataset(const Dataset& dataset) {
  dataset.Validate();
  ByteWriter w;
  w.Raw(std::string_view(kMagic, 4));
  w.U32(kDatasetFormatVersion);
  w.U32(static_cast<uint32_t>(dataset.channels));
  w.U32(static_cast<uint32_t>(dataset.window_len));
  w.U64(dataset.size());
  const auto& attrs = dataset.schema.attributes();
  w.U32(static_cast<uint32_t>(attrs.size()));
  for (const auto& a : attrs) {
    w.String(a.name);
    w.U32(a.cardinality);
    w.U8(static_cast<uint8_t>(a.role));
  }
  for (const auto& s : dataset.segments) {
    const float* p = s.values.data();
    for (int i = 0; i < dataset.feature_size(); ++i) w.F32(p[i]);
    for (const auto& a : attrs) w.U32(static_cast<uint32_t>(s.Label(a.name, dataset.schema)));
  }
  return w.Take();
}

Dataset DeserializeDataset(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.Raw(4);
  Require(std::equal(magic.begin(), magic.end(), kMagic), ErrorCode::kFormat,
          "not a dataset file (bad magic)");
  const uint32_t version = r.U32();
  Require(version == kDatasetFormatVersion, ErrorCode::kFormat,
          "unsupported dataset format version " + std::to_string(version));
  Dataset ds;
  ds.channels = static_cast<int>(r.U32());
  ds.window_len = static_cast<int>(r.U32());
  const uint64_t count = r.U64();
  const uint32_t n_attrs = r.U32();
  std::vector<AttributeSpec> attrs;
  for (uint32_t i = 0; i < n_attrs; ++i) {
    AttributeSpec a;
    a.name = r.String();
    a.cardinality = r.U32();
    const uint8_t role = r.U8();
    Require(role <= 2, ErrorCode::kFormat, "bad attribute role byte");
    a.role = static_cast<AttributeRole>(role);
    attrs.push_back(std::move(a));
  }
  ds.schema = AttributeSchema(attrs);
  const size_t per_segment = static_cast<size_t>(ds.feature_size()) * 4 + attrs.size() * 4;
  Require(r.remaining() == per_segment * count, ErrorCode::kFormat, "dataset payload size mismatch");
  ds.segments.reserve(count);
  for (uint64_t j = 0; j < count; ++j) {
    SensorSegment s;
    s.values.resize(ds.channels, ds.window_len);
    float* p = s.values.data();
    for (int i = 0; i < ds.feature_size(); ++i) p[i] = r.F32();
    for (const auto& a : attrs) {
      const int label = static_cast<int>(r.U32());
      switch (a.role) {
        case AttributeRole::kPublic: s.public_label = label; break;
        case AttributeRole::kPrivate: s.private_labels[a.name] = label; break;
        case AttributeRole::kUnspecified: s.unspecified_labels[a.name] = label; break;
      }
    }
    ds.segments.push_back(std::move(s));
  }
  ds.Validate();
  return ds;
}

void SaveDataset(const Dataset& dataset, const std::filesystem::path& path) {
  WriteFileBytes(path, SerializeDataset(dataset));
}

Dataset LoadDataset(const std::filesystem::path& path) {
  return DeserializeDataset(ReadFileBytes(path));
}

}  // namespace veil::dataio
