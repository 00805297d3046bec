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

#include "tools/cli.h"

#include <algorithm>
#include <exception>
#include <optional>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "veil/common/version.h"
#include "veil/pipeline/pipeline.h"

namespace veil::cli {

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
      return kExitConfig;
    case ErrorCode::kDependency:
      return kExitDependency;
    case ErrorCode::kSchema:
      return kExitSchema;
    default:
      return kExitInternal;
  }
}

namespace {

struct GlobalFlags {
  std::string config_path;
  std::optional<uint64_t> seed;
  bool deterministic = false;
  std::string out_dir = "veil-work";
};

struct ObfuscateFlags {
  std::string input;
  std::string output;
  std::optional<double> w_u;
  std::vector<std::string> w_s;
  std::optional<uint64_t> seed;
  std::optional<int> batch_size;
  std::optional<int> ddim_steps;
};

struct EvaluateFlags {
  std::string input;
  std::string reid_train;
  std::string report;
};

struct BenchFlags {
  std::optional<int> n_batches;
  std::optional<int> batch_size;
  std::optional<int> ddim_steps;
};

pipeline::RunConfig ResolveConfig(const GlobalFlags& g) {
  pipeline::RunConfig c =
      g.config_path.empty() ? pipeline::RunConfig{} : pipeline::LoadRunConfig(g.config_path);
  if (g.seed) c.seed = g.seed;
  if (g.deterministic) c.deterministic = true;
  pipeline::ResolveSeeds(c);
  if (c.deterministic) Eigen::setNbThreads(1);
  return c;
}

// "name=weight" pairs; later entries override earlier ones.
std::vector<guidance::AttributeWeight> ParseNegations(const std::vector<std::string>& items) {
  std::vector<guidance::AttributeWeight> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    Require(eq != std::string::npos && eq > 0 && eq + 1 < item.size(), ErrorCode::kConfig,
            "--w-s expects name=weight, got '" + item + "'");
    const std::string name = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    double w = 0.0;
    try {
      size_t used = 0;
      w = std::stod(value, &used);
      Require(used == value.size(), ErrorCode::kConfig, "bad --w-s weight '" + value + "'");
    } catch (const std::logic_error&) {
      Fail(ErrorCode::kConfig, "bad --w-s weight '" + value + "'");
    }
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const guidance::AttributeWeight& a) { return a.attribute == name; });
    if (it != out.end()) {
      it->w_s = w;
    } else {
      out.push_back({name, w});
    }
  }
  return out;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent-diffusion sensor data obfuscation", "veil"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  GlobalFlags g;
  app.add_option("--config", g.config_path, "JSON run configuration");
  app.add_option("--seed", g.seed, "Master seed overriding every stage seed");
  app.add_flag("--deterministic", g.deterministic,
               "Single-threaded reductions; omit wall-clock timing from outputs");
  app.add_option("--out-dir", g.out_dir, "Workspace directory")->capture_default_str();

  bool force = false;
  auto* gen = app.add_subcommand("gen-data", "Generate and standardize the synthetic corpus");
  gen->add_flag("--force", force, "Overwrite an existing dataset");

  std::string stage_name;
  auto* train = app.add_subcommand("train", "Train one model stage");
  train->add_option("stage", stage_name, "vae | contrastive | ldm | aux")
      ->required()
      ->check(CLI::IsMember({"vae", "contrastive", "ldm", "aux"}));
  train->add_flag("--force", force, "Overwrite an existing checkpoint");

  ObfuscateFlags of;
  auto* obf = app.add_subcommand("obfuscate", "Obfuscate a dataset with the trained bundle");
  obf->add_option("--input", of.input, "Input dataset (default: test split)");
  obf->add_option("--output", of.output, "Output dataset (default: obf/<input name>)");
  obf->add_option("--w-u", of.w_u, "Contrastive guidance weight");
  obf->add_option("--w-s", of.w_s, "Negated private attribute, name=weight (repeatable)")
      ->allow_extra_args(false);
  obf->add_option("--seed", of.seed, "Sampling seed");
  obf->add_option("--batch-size", of.batch_size, "Segments per batch");
  obf->add_option("--ddim-steps", of.ddim_steps, "DDIM sampling steps");

  EvaluateFlags ef;
  auto* eval = app.add_subcommand("evaluate", "Score a dataset with raw-trained classifiers");
  eval->add_option("--input", ef.input, "Dataset to evaluate (default: test split)");
  eval->add_option("--reid-train", ef.reid_train,
                   "Obfuscated training split for the re-identification attack");
  eval->add_option("--report", ef.report, "Report path");

  auto* sweep = app.add_subcommand("sweep", "Grid sweep over the guidance weights");
  auto* audit_cmd = app.add_subcommand("audit", "MI curves of the contrastive snapshots");

  BenchFlags bf;
  auto* bench = app.add_subcommand("bench", "Per-segment obfuscation timing by component");
  bench->add_option("--n-batches", bf.n_batches, "Timed batches");
  bench->add_option("--batch-size", bf.batch_size, "Segments per batch");
  bench->add_option("--ddim-steps", bf.ddim_steps, "DDIM sampling steps");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const pipeline::RunConfig config = ResolveConfig(g);
    const pipeline::Workspace ws(g.out_dir);
    if (gen->parsed()) {
      pipeline::GenData(config, ws, force, out);
    } else if (train->parsed()) {
      pipeline::Train(pipeline::ParseStage(stage_name), config, ws, force, out);
    } else if (obf->parsed()) {
      pipeline::ObfuscateArgs a = pipeline::DefaultObfuscateArgs(config);
      a.input = of.input;
      a.output = of.output;
      if (of.w_u) a.spec.w_u = *of.w_u;
      if (!of.w_s.empty()) a.spec.negations = ParseNegations(of.w_s);
      if (of.seed) a.options.seed = *of.seed;
      if (of.batch_size) a.options.batch_size = *of.batch_size;
      if (of.ddim_steps) a.options.ddim_steps = *of.ddim_steps;
      pipeline::ObfuscateFile(config, ws, a, out);
    } else if (eval->parsed()) {
      pipeline::EvaluateArgs a;
      a.input = ef.input;
      if (!ef.reid_train.empty()) a.reid_train = ef.reid_train;
      a.report = ef.report;
      const auto r = pipeline::EvaluateFile(config, ws, a, out);
      out << "report: " << r.report_path.string() << '\n';
    } else if (sweep->parsed()) {
      pipeline::Sweep(config, ws, out);
    } else if (audit_cmd->parsed()) {
      pipeline::Audit(config, ws, out);
    } else if (bench->parsed()) {
      pipeline::RunConfig c = config;
      if (bf.n_batches) c.bench.n_batches = *bf.n_batches;
      if (bf.batch_size) c.bench.batch_size = *bf.batch_size;
      pipeline::Bench(c, ws, bf.ddim_steps.value_or(c.obfuscate.ddim_steps), out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return ExitCodeFor(e.code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitOk;
}

}  // namespace veil::cli
