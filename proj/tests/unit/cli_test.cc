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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "tests/testing/test_util.h"
#include "tools/cli.h"
#include "veil/audit/audit.h"
#include "veil/common/binary_io.h"
#include "veil/dataio/dataset.h"
#include "veil/nn/checkpoint.h"

namespace veil::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::ScopedTempDir;

constexpr char kTinyConfig[] = R"({
  "data": {"per_class": 16, "window_len": 32},
  "vae": {"hidden": [32, 16], "latent_dim": 4, "epochs": 3, "batch_size": 32},
  "contrastive": {"conv_channels": [4, 4], "fc_widths": [16, 8], "embed_dim": 8, "epochs": 2},
  "ldm": {"channels": [8, 8, 8], "groups": 2, "time_dim": 8, "context_dim": 8,
          "steps": 20, "timesteps": 100, "batch_size": 32},
  "aux": {"hidden": [16, 8], "epochs": 2},
  "eval": {"epochs": 2},
  "obfuscate": {"ddim_steps": 5},
  "sweep": {"w_u_grid": [0, 1, 2], "w_s_grid": [0, 0.01]},
  "mine": {"steps": 40},
  "bench": {"n_batches": 2, "batch_size": 8}
})";

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result RunVeil(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.code = RunCli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path WriteConfig(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.json";
  WriteFileText(p, text);
  return p;
}

size_t CsvRows(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n == 0 ? 0 : n - 1;
}

std::vector<std::string> Base(const fs::path& config, const fs::path& ws) {
  return {"--config", config.string(), "--out-dir", ws.string(), "--deterministic"};
}

std::vector<std::string> With(std::vector<std::string> base,
                              const std::vector<std::string>& more) {
  base.insert(base.end(), more.begin(), more.end());
  return base;
}

// One tiny trained workspace shared across the suite.
class TrainedWorkspace : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new ScopedTempDir();
    config_ = WriteConfig(dir_->path(), kTinyConfig);
    ws_ = dir_->path() / "ws";
    ASSERT_EQ(RunVeil(Cmd({"gen-data"})).code, kExitOk);
    for (const char* s : {"vae", "contrastive", "ldm", "aux"}) {
      const Result r = RunVeil(Cmd({"train", s}));
      ASSERT_EQ(r.code, kExitOk) << s << ": " << r.err;
    }
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::vector<std::string> Cmd(const std::vector<std::string>& more) {
    return With(Base(config_, ws_), more);
  }

  static ScopedTempDir* dir_;
  static fs::path config_;
  static fs::path ws_;
};

ScopedTempDir* TrainedWorkspace::dir_ = nullptr;
fs::path TrainedWorkspace::config_;
fs::path TrainedWorkspace::ws_;

TEST(CliTest, ExitCodeMapping) {
  EXPECT_EQ(ExitCodeFor(ErrorCode::kConfig), 2);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kDependency), 3);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kSchema), 4);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kNumeric), 1);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kInternal), 1);
}

TEST(CliTest, UsageErrorsAreConfigErrors) {
  EXPECT_EQ(RunVeil({}).code, kExitConfig);
  EXPECT_EQ(RunVeil({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(RunVeil({"train", "decoder"}).code, kExitConfig);
  EXPECT_EQ(RunVeil({"obfuscate", "--batch-size", "many"}).code, kExitConfig);
  const Result v = RunVeil({"--version"});
  EXPECT_EQ(v.code, kExitOk);
  EXPECT_NE(v.out.find("0.3.0"), std::string::npos);
}

TEST(CliTest, UnknownConfigKeyExitsTwoNamingTheKey) {
  ScopedTempDir dir;
  const fs::path cfg = WriteConfig(dir.path(), R"({"contrastive": {"temprature": 0.2}})");
  const Result r = RunVeil({"--config", cfg.string(), "--out-dir", (dir.path() / "w").string(),
                        "gen-data"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("contrastive.temprature"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir.path() / "w"));
}

TEST(CliTest, DefaultGenDataWritesTheFullCorpusAndSeedRepeatsMatch) {
  ScopedTempDir dir;
  const fs::path a = dir.path() / "a", b = dir.path() / "b", c = dir.path() / "c";
  ASSERT_EQ(RunVeil({"--out-dir", a.string(), "--seed", "5", "gen-data"}).code, kExitOk);
  ASSERT_EQ(RunVeil({"--out-dir", b.string(), "--seed", "5", "gen-data"}).code, kExitOk);
  ASSERT_EQ(RunVeil({"--out-dir", c.string(), "--seed", "6", "gen-data"}).code, kExitOk);
  const auto train = dataio::LoadDataset(a / "data/train.vds");
  const auto test = dataio::LoadDataset(a / "data/test.vds");
  EXPECT_EQ(train.size() + test.size(), 512u);
  for (const char* f : {"data/train.vds", "data/test.vds", "data/schema.json"}) {
    EXPECT_EQ(FileDigest(a / f), FileDigest(b / f)) << f;
  }
  EXPECT_NE(FileDigest(a / "data/train.vds"), FileDigest(c / "data/train.vds"));

  const json schema = json::parse(ReadFileText(a / "data/schema.json"));
  EXPECT_EQ(schema.at("format_version"), 1);
  EXPECT_EQ(schema.at("tool_version"), "0.3.0");
  EXPECT_EQ(schema.at("run_config").at("seed"), 5);
  EXPECT_EQ(schema.at("train").at("sha256"), FileDigest(a / "data/train.vds"));

  EXPECT_EQ(RunVeil({"--out-dir", a.string(), "gen-data"}).code, kExitConfig);
  EXPECT_EQ(RunVeil({"--out-dir", a.string(), "--seed", "5", "gen-data", "--force"}).code, kExitOk);
  EXPECT_EQ(FileDigest(a / "data/train.vds"), FileDigest(b / "data/train.vds"));
}

TEST(CliTest, MissingPrerequisitesExitThreeNamingTheStage) {
  ScopedTempDir dir;
  const fs::path cfg = WriteConfig(dir.path(), kTinyConfig);
  const auto base = Base(cfg, dir.path() / "w");
  EXPECT_EQ(RunVeil(With(base, {"train", "vae"})).code, kExitDependency);
  ASSERT_EQ(RunVeil(With(base, {"gen-data"})).code, kExitOk);
  const Result ldm = RunVeil(With(base, {"train", "ldm"}));
  EXPECT_EQ(ldm.code, kExitDependency);
  EXPECT_NE(ldm.err.find("'vae'"), std::string::npos) << ldm.err;
  ASSERT_EQ(RunVeil(With(base, {"train", "vae"})).code, kExitOk);
  const Result aux = RunVeil(With(base, {"train", "aux"}));
  EXPECT_EQ(aux.code, kExitDependency);
  EXPECT_NE(aux.err.find("'contrastive'"), std::string::npos) << aux.err;
  EXPECT_EQ(RunVeil(With(base, {"obfuscate"})).code, kExitDependency);
  EXPECT_EQ(RunVeil(With(base, {"audit"})).code, kExitDependency);
}

TEST(CliTest, DeterministicRetrainGivesIdenticalCheckpoints) {
  ScopedTempDir dir;
  const fs::path cfg = WriteConfig(dir.path(), kTinyConfig);
  std::vector<std::string> digests;
  for (const char* name : {"a", "b"}) {
    const auto base = Base(cfg, dir.path() / name);
    ASSERT_EQ(RunVeil(With(base, {"gen-data"})).code, kExitOk);
    ASSERT_EQ(RunVeil(With(base, {"train", "vae"})).code, kExitOk);
    ASSERT_EQ(RunVeil(With(base, {"train", "contrastive"})).code, kExitOk);
    std::string d;
    for (const char* f : {"models/vae.ckpt", "models/contrastive.ckpt", "logs/vae-loss.csv",
                          "models/snapshots/epoch-002.vds", "manifest.json"}) {
      d += FileDigest(dir.path() / name / f);
    }
    digests.push_back(d);
  }
  EXPECT_EQ(digests[0], digests[1]);
}

TEST_F(TrainedWorkspace, LossCsvHasOneRowPerStep) {
  // 102 training segments: 4 VAE batches of 32 per epoch.
  EXPECT_EQ(CsvRows(ws_ / "logs/vae-loss.csv"), 3u * 4u);
  EXPECT_EQ(CsvRows(ws_ / "logs/ldm-loss.csv"), 20u);
  const std::string head = ReadFileText(ws_ / "logs/ldm-loss.csv").substr(0, 13);
  EXPECT_EQ(head, "step,loss,lr\n");
  const auto ckpt = nn::LoadCheckpoint(ws_ / "models/ldm.ckpt");
  const json meta = json::parse(ckpt.metadata);
  EXPECT_EQ(meta.at("run_config").at("ldm").at("steps"), 20);
  EXPECT_EQ(meta.at("upstream").at("vae"), FileDigest(ws_ / "models/vae.ckpt"));
}

TEST_F(TrainedWorkspace, RetrainRequiresForce) {
  EXPECT_EQ(RunVeil(Cmd({"train", "ldm"})).code, kExitConfig);
  EXPECT_EQ(RunVeil(Cmd({"train", "aux"})).code, kExitConfig);
}

TEST_F(TrainedWorkspace, ManifestListsVerifiedComponents) {
  const json m = json::parse(ReadFileText(ws_ / "manifest.json"));
  EXPECT_EQ(m.at("format"), "veil.manifest");
  for (const char* c : {"vae", "contrastive", "ldm"}) {
    EXPECT_EQ(m.at("components").at(c).at("sha256"),
              FileDigest(ws_ / m.at("components").at(c).at("path").get<std::string>()));
  }
  EXPECT_TRUE(m.at("components").at("aux").contains("gender"));
  EXPECT_EQ(m.at("schedule").at("timesteps"), 100);
}

TEST_F(TrainedWorkspace, ObfuscateKeepsCountAndRecordsFlags) {
  const fs::path out = ws_ / "obf/flags.vds";
  const Result r = RunVeil(Cmd({"obfuscate", "--output", out.string(), "--w-u", "2", "--w-s",
                            "gender=0.01", "--seed", "3", "--batch-size", "7"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto in = dataio::LoadDataset(ws_ / "data/test.vds");
  const auto obf = dataio::LoadDataset(out);
  EXPECT_EQ(obf.size(), in.size());
  EXPECT_EQ(obf.Labels("gender"), in.Labels("gender"));
  EXPECT_TRUE(obf.schema == in.schema);

  const json side = json::parse(ReadFileText(ws_ / "obf/flags.vds.json"));
  EXPECT_EQ(side.at("flags").at("w_u"), 2.0);
  EXPECT_EQ(side.at("flags").at("w_s").at("gender"), 0.01);
  EXPECT_EQ(side.at("flags").at("seed"), 3);
  EXPECT_EQ(side.at("flags").at("batch_size"), 7);
  EXPECT_EQ(side.at("output").at("sha256"), FileDigest(out));
  EXPECT_EQ(side.at("input").at("sha256"), FileDigest(ws_ / "data/test.vds"));
  EXPECT_EQ(side.at("components").at("ldm"), FileDigest(ws_ / "models/ldm.ckpt"));
  EXPECT_EQ(side.at("tool_version"), "0.3.0");
  EXPECT_FALSE(side.contains("seconds_per_segment"));
}

TEST_F(TrainedWorkspace, ZeroNegationWeightIsByteIdenticalToOmittingIt) {
  const fs::path a = ws_ / "obf/zero.vds", b = ws_ / "obf/none.vds";
  ASSERT_EQ(RunVeil(Cmd({"obfuscate", "--output", a.string(), "--w-s", "gender=0"})).code, kExitOk);
  ASSERT_EQ(RunVeil(Cmd({"obfuscate", "--output", b.string()})).code, kExitOk);
  EXPECT_EQ(FileDigest(a), FileDigest(b));
  EXPECT_EQ(ReadFileBytes(a), ReadFileBytes(b));
}

TEST_F(TrainedWorkspace, BatchSizeDoesNotChangeTheSamples) {
  const fs::path a = ws_ / "obf/b5.vds", b = ws_ / "obf/b128.vds";
  ASSERT_EQ(RunVeil(Cmd({"obfuscate", "--output", a.string(), "--batch-size", "5"})).code, kExitOk);
  ASSERT_EQ(RunVeil(Cmd({"obfuscate", "--output", b.string()})).code, kExitOk);
  const auto x = dataio::LoadDataset(a).Features(), y = dataio::LoadDataset(b).Features();
  EXPECT_LE((x - y).cwiseAbs().maxCoeff(), 1e-4f);
}

TEST_F(TrainedWorkspace, BadNegationsAreRejected) {
  const Result unknown = RunVeil(Cmd({"obfuscate", "--w-s", "age=0.1"}));
  EXPECT_EQ(unknown.code, kExitSchema);
  EXPECT_NE(unknown.err.find("age"), std::string::npos);
  EXPECT_EQ(RunVeil(Cmd({"obfuscate", "--w-s", "activity=0.1"})).code, kExitSchema);
  EXPECT_EQ(RunVeil(Cmd({"obfuscate", "--w-s", "gender"})).code, kExitConfig);
  EXPECT_EQ(RunVeil(Cmd({"obfuscate", "--w-s", "gender=lots"})).code, kExitConfig);
}

TEST_F(TrainedWorkspace, TamperedCheckpointIsADependencyError) {
  ScopedTempDir copy;
  fs::copy(ws_, copy.path() / "ws", fs::copy_options::recursive);
  auto bytes = ReadFileBytes(copy.path() / "ws/models/vae.ckpt");
  bytes[bytes.size() / 2] ^= 0x01;
  WriteFileBytes(copy.path() / "ws/models/vae.ckpt", bytes);
  const Result r = RunVeil(With(Base(config_, copy.path() / "ws"), {"obfuscate"}));
  EXPECT_EQ(r.code, kExitDependency);
  EXPECT_NE(r.err.find("digest mismatch"), std::string::npos) << r.err;
}

TEST_F(TrainedWorkspace, EvaluatingRawDataReproducesHeldOutAccuracy) {
  const fs::path report = ws_ / "reports/raw.json";
  const Result r = RunVeil(Cmd({"evaluate", "--report", report.string()}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json doc = json::parse(ReadFileText(report));
  EXPECT_EQ(doc.at("format"), "veil.eval_report");
  for (const char* attr : {"activity", "gender"}) {
    const auto clf = audit::EvalFromCheckpoint(
        nn::LoadCheckpoint(ws_ / ("models/eval-" + std::string(attr) + ".ckpt")));
    bool found = false;
    for (const auto& a : doc.at("attributes")) {
      if (a.at("attribute") != attr) continue;
      found = true;
      EXPECT_DOUBLE_EQ(a.at("accuracy").get<double>(), clf.held_out_accuracy) << attr;
    }
    EXPECT_TRUE(found) << attr;
  }
  EXPECT_EQ(doc.at("context").at("input").at("sha256"), FileDigest(ws_ / "data/test.vds"));
}

TEST_F(TrainedWorkspace, EvaluateObfuscatedWithReidentification) {
  const fs::path tr = ws_ / "obf/reid-train.vds", te = ws_ / "obf/reid-test.vds";
  ASSERT_EQ(RunVeil(Cmd({"obfuscate", "--input", (ws_ / "data/train.vds").string(), "--output",
                     tr.string()}))
                .code,
            kExitOk);
  ASSERT_EQ(RunVeil(Cmd({"obfuscate", "--output", te.string()})).code, kExitOk);
  const Result r = RunVeil(Cmd({"evaluate", "--input", te.string(), "--reid-train", tr.string()}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json doc = json::parse(ReadFileText(ws_ / "reports/eval-obf-reid-test.json"));
  const auto& ctx = doc.at("context");
  EXPECT_TRUE(ctx.at("reidentification").contains("gender"));
  EXPECT_EQ(ctx.at("guidance").at("w_u"), 4.5);
  EXPECT_EQ(ctx.at("reid_train").at("sha256"), FileDigest(tr));
}

TEST_F(TrainedWorkspace, SweepWritesOneRowPerCellWithConstantDigests) {
  const Result r = RunVeil(Cmd({"sweep"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(CsvRows(ws_ / "reports/sweep.csv"), 3u * 2u);
  const json doc = json::parse(ReadFileText(ws_ / "reports/sweep.json"));
  EXPECT_TRUE(doc.at("digests_constant").get<bool>());
  EXPECT_EQ(doc.at("digest_before"), doc.at("digest_after"));
  EXPECT_EQ(doc.at("rows").size(), 6u);
  EXPECT_EQ(doc.at("attribute"), "gender");
}

TEST_F(TrainedWorkspace, AuditWritesEpochsTimesAttributesRows) {
  const Result r = RunVeil(Cmd({"audit"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  // Three snapshots (untrained + two epochs) for two attributes.
  EXPECT_EQ(CsvRows(ws_ / "reports/mi.csv"), 3u * 2u);
}

TEST_F(TrainedWorkspace, BenchReportsEveryComponent) {
  // Timing is wall clock, so this runs without --deterministic.
  const Result r = RunVeil({"--config", config_.string(), "--out-dir", ws_.string(), "bench",
                        "--n-batches", "2", "--ddim-steps", "4"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json doc = json::parse(ReadFileText(ws_ / "reports/bench.json"));
  std::vector<std::string> names;
  for (const auto& row : doc.at("rows")) {
    names.push_back(row.at("component"));
    EXPECT_GE(row.at("mean_ms").get<double>(), 0.0);
  }
  EXPECT_EQ(names, (std::vector<std::string>{"unet", "decoder", "aux-u", "aux-s", "total"}));
  EXPECT_EQ(doc.at("ddim_steps"), 4);
}

}  // namespace
}  // namespace veil::cli
