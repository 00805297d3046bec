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

// Artifact orchestration behind the command-line tool. Every command reads
// and writes inside one workspace directory:
//
//   data/{train,test}.vds, data/schema.json
//   models/{vae,contrastive,ldm}.ckpt, models/aux-<attr>.ckpt,
//   models/eval-<attr>.ckpt, models/snapshots/epoch-<e>.vds
//   logs/<stage>-loss.csv, manifest.json, obf/, reports/

#ifndef VEIL_PIPELINE_PIPELINE_H_
#define VEIL_PIPELINE_PIPELINE_H_

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "veil/audit/audit.h"
#include "veil/guidance/guidance.h"
#include "veil/pipeline/config.h"

namespace veil::pipeline {

namespace fs = std::filesystem;

enum class Stage { kVae, kContrastive, kLdm, kAux };
const char* StageName(Stage stage);
// Error(kConfig) for an unknown name.
Stage ParseStage(const std::string& name);

class Workspace {
 public:
  explicit Workspace(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const { return root_; }
  fs::path TrainData() const { return root_ / "data" / "train.vds"; }
  fs::path TestData() const { return root_ / "data" / "test.vds"; }
  fs::path SchemaJson() const { return root_ / "data" / "schema.json"; }
  fs::path Checkpoint(Stage stage) const;  // aux: use AuxCheckpoint
  fs::path AuxCheckpoint(const std::string& attribute) const;
  fs::path EvalCheckpoint(const std::string& attribute) const;
  fs::path SnapshotDir() const { return root_ / "models" / "snapshots"; }
  fs::path LossCsv(const std::string& name) const;
  fs::path Manifest() const { return root_ / "manifest.json"; }
  fs::path Reports() const { return root_ / "reports"; }
  fs::path ObfDir() const { return root_ / "obf"; }

  // Path relative to the workspace root, for embedding in artifacts.
  std::string Relative(const fs::path& path) const;

 private:
  fs::path root_;
};

struct ComponentDigest {
  std::string path;  // relative to the workspace
  std::string sha256;
};

inline constexpr int kManifestFormatVersion = 1;

struct BundleManifest {
  std::optional<ComponentDigest> vae;
  std::optional<ComponentDigest> contrastive;
  std::optional<ComponentDigest> ldm;
  std::map<std::string, ComponentDigest> aux;
  ScheduleConfig schedule;
  dataio::AttributeSchema schema;

  std::string ToJson() const;
  // Error(kFormat) on malformed input or an unknown major format version.
  static BundleManifest FromJson(const std::string& text);
};

// Manifest describing the checkpoints currently present in `ws`.
BundleManifest ScanManifest(const Workspace& ws, const RunConfig& config);
// Error(kDependency) when the manifest is absent.
BundleManifest ReadManifest(const Workspace& ws);

// Loads every component listed in the manifest after verifying its digest
// and the recorded upstream digests. Error(kDependency) for missing or
// stale components, Error(kSchema) for incompatible schemas.
guidance::Bundle LoadBundle(const Workspace& ws, BundleManifest* manifest = nullptr);

struct DataSplits {
  dataio::Dataset train;
  dataio::Dataset test;
};

void GenData(const RunConfig& config, const Workspace& ws, bool force, std::ostream& log);
// Error(kDependency) when gen-data has not run.
DataSplits LoadData(const Workspace& ws);

// Trains one stage; Error(kDependency) names a missing prerequisite and
// Error(kConfig) refuses to overwrite an existing checkpoint without `force`.
void Train(Stage stage, const RunConfig& config, const Workspace& ws, bool force,
           std::ostream& log);

struct ObfuscateArgs {
  fs::path input;   // defaults to the test split
  fs::path output;  // defaults to obf/<input file name>
  guidance::GuidanceSpec spec;
  guidance::ObfuscateOptions options;
};

struct ObfuscateOutcome {
  fs::path output;
  fs::path sidecar;
  size_t segments = 0;
};

// Error(kSchema) when a negated attribute is not in the input schema.
ObfuscateOutcome ObfuscateFile(const RunConfig& config, const Workspace& ws,
                               const ObfuscateArgs& args, std::ostream& log);

// Spec and options from the `obfuscate` config section.
ObfuscateArgs DefaultObfuscateArgs(const RunConfig& config);

// Raw-trained classifiers for every schema attribute, trained on the train
// split and cached in the workspace when absent.
std::map<std::string, audit::TrainedClassifier> EnsureEvalClassifiers(const RunConfig& config,
                                                                      const Workspace& ws,
                                                                      std::ostream& log);

struct EvaluateArgs {
  fs::path input;                     // defaults to the test split
  std::optional<fs::path> reid_train;  // obfuscated train split for the attack
  fs::path report;                    // defaults to reports/eval-<dir>-<stem>.json
};

struct EvaluateOutcome {
  audit::EvalReport report;
  std::map<std::string, double> reidentification;  // by private attribute
  fs::path report_path;
};

EvaluateOutcome EvaluateFile(const RunConfig& config, const Workspace& ws,
                             const EvaluateArgs& args, std::ostream& log);

// Writes reports/sweep.csv and reports/sweep.json.
audit::SweepResult Sweep(const RunConfig& config, const Workspace& ws, std::ostream& log);

// Reads the contrastive snapshots and writes reports/mi.csv.
std::vector<audit::MiPoint> Audit(const RunConfig& config, const Workspace& ws,
                                  std::ostream& log);

struct BenchRow {
  std::string component;  // unet, decoder, aux-u, aux-s, total
  double mean_ms = 0.0;   // per segment
  double std_ms = 0.0;    // across batches
};

struct BenchReport {
  int ddim_steps = 0;
  int batches = 0;
  int batch_size = 0;
  std::vector<BenchRow> rows;

  const BenchRow& Get(const std::string& component) const;
};

// Times obfuscation per segment by component; writes reports/bench.json.
BenchReport Bench(const RunConfig& config, const Workspace& ws, int ddim_steps,
                  std::ostream& log);

}  // namespace veil::pipeline

#endif  // VEIL_PIPELINE_PIPELINE_H_
