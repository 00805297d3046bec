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

#include "veil/pipeline/pipeline.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "veil/common/binary_io.h"
#include "veil/common/error.h"
#include "veil/common/version.h"

namespace veil::pipeline {

using nlohmann::json;

const char* StageName(Stage stage) {
  switch (stage) {
    case Stage::kVae:
      return "vae";
    case Stage::kContrastive:
      return "contrastive";
    case Stage::kLdm:
      return "ldm";
    case Stage::kAux:
      return "aux";
  }
  return "unknown";
}

Stage ParseStage(const std::string& name) {
  for (Stage s : {Stage::kVae, Stage::kContrastive, Stage::kLdm, Stage::kAux}) {
    if (name == StageName(s)) return s;
  }
  Fail(ErrorCode::kConfig, "unknown training stage '" + name + "'");
}

fs::path Workspace::Checkpoint(Stage stage) const {
  return root_ / "models" / (std::string(StageName(stage)) + ".ckpt");
}

fs::path Workspace::AuxCheckpoint(const std::string& attribute) const {
  return root_ / "models" / ("aux-" + attribute + ".ckpt");
}

fs::path Workspace::EvalCheckpoint(const std::string& attribute) const {
  return root_ / "models" / ("eval-" + attribute + ".ckpt");
}

fs::path Workspace::LossCsv(const std::string& name) const {
  return root_ / "logs" / (name + "-loss.csv");
}

std::string Workspace::Relative(const fs::path& path) const {
  return fs::relative(path, root_).generic_string();
}

namespace {

const char* RoleName(dataio::AttributeRole role) {
  switch (role) {
    case dataio::AttributeRole::kPublic:
      return "public";
    case dataio::AttributeRole::kPrivate:
      return "private";
    case dataio::AttributeRole::kUnspecified:
      return "unspecified";
  }
  return "unknown";
}

dataio::AttributeRole ParseRole(const std::string& name) {
  if (name == "public") return dataio::AttributeRole::kPublic;
  if (name == "private") return dataio::AttributeRole::kPrivate;
  if (name == "unspecified") return dataio::AttributeRole::kUnspecified;
  Fail(ErrorCode::kFormat, "unknown attribute role '" + name + "'");
}

json SchemaToJson(const dataio::AttributeSchema& schema) {
  json out = json::array();
  for (const auto& a : schema.attributes()) {
    out.push_back({{"name", a.name}, {"cardinality", a.cardinality}, {"role", RoleName(a.role)}});
  }
  return out;
}

dataio::AttributeSchema SchemaFromJson(const json& j) {
  std::vector<dataio::AttributeSpec> attrs;
  for (const auto& a : j) {
    attrs.push_back({a.at("name").get<std::string>(), a.at("cardinality").get<uint32_t>(),
                     ParseRole(a.at("role").get<std::string>())});
  }
  return dataio::AttributeSchema(std::move(attrs));
}

void WriteJson(const fs::path& path, const json& doc) {
  fs::create_directories(path.parent_path());
  WriteFileText(path, doc.dump(2) + "\n");
}

json ReadJson(const fs::path& path) {
  try {
    return json::parse(ReadFileText(path));
  } catch (const json::exception& e) {
    Fail(ErrorCode::kFormat, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

json Header(const std::string& format) {
  return {{"format", format}, {"format_version", 1}, {"tool_version", kToolVersion}};
}

// Records the resolved run config and upstream component digests in the
// checkpoint's metadata before saving it.
void SaveWithProvenance(nn::Checkpoint ckpt, const fs::path& path, const RunConfig& config,
                        const json& upstream = json::object()) {
  json meta = json::parse(ckpt.metadata);
  meta["run_config"] = json::parse(RunConfigToJson(config));
  meta["upstream"] = upstream;
  ckpt.metadata = meta.dump();
  fs::create_directories(path.parent_path());
  nn::SaveCheckpoint(path, ckpt);
}

json UpstreamOf(const nn::Checkpoint& ckpt) {
  const json meta = json::parse(ckpt.metadata);
  return meta.contains("upstream") ? meta.at("upstream") : json::object();
}

void RequireAbsent(const fs::path& path, bool force, const std::string& what) {
  Require(force || !fs::exists(path), ErrorCode::kConfig,
          what + " already exists at " + path.string() + "; pass --force to overwrite");
}

nn::Checkpoint RequireCheckpoint(const Workspace& ws, Stage needed, Stage for_stage) {
  const fs::path p = ws.Checkpoint(needed);
  Require(fs::exists(p), ErrorCode::kDependency,
          std::string("stage '") + StageName(for_stage) + "' needs the '" + StageName(needed) +
              "' checkpoint; run `train " + StageName(needed) + "` first");
  return nn::LoadCheckpoint(p);
}

template <typename Row>
void WriteCsv(const fs::path& path, const std::string& header, const std::vector<Row>& rows,
              void (*emit)(std::ostream&, const Row&)) {
  std::ostringstream os;
  os << std::setprecision(9) << header << '\n';
  for (size_t i = 0; i < rows.size(); ++i) {
    os << i << ',';
    emit(os, rows[i]);
    os << '\n';
  }
  fs::create_directories(path.parent_path());
  WriteFileText(path, os.str());
}

void WriteLossCsv(const fs::path& path, const std::vector<double>& loss) {
  WriteCsv<double>(path, "step,loss", loss, [](std::ostream& os, const double& v) { os << v; });
}

dataio::Dataset Concat(const dataio::Dataset& a, const dataio::Dataset& b) {
  dataio::Dataset out = a;
  out.channel_stats.reset();
  out.segments.insert(out.segments.end(), b.segments.begin(), b.segments.end());
  return out;
}

// Embedding matrix as a dataset (embed_dim channels, window 1) carrying the
// source labels.
dataio::Dataset EmbeddingDataset(const Eigen::MatrixXf& z, const dataio::Dataset& source) {
  dataio::Dataset out;
  out.channels = static_cast<int>(z.rows());
  out.window_len = 1;
  out.schema = source.schema;
  out.segments.reserve(source.size());
  for (size_t i = 0; i < source.size(); ++i) {
    dataio::SensorSegment s = source.segments[i];
    s.values = z.col(static_cast<Eigen::Index>(i));
    out.segments.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> AttributesWithRole(const dataio::AttributeSchema& schema,
                                            dataio::AttributeRole role) {
  return schema.NamesWithRole(role);
}

}  // namespace

// ---- Manifest ------------------------------------------------------------------

std::string BundleManifest::ToJson() const {
  json doc = Header("veil.manifest");
  json comps = json::object();
  auto put = [&](const char* name, const std::optional<ComponentDigest>& d) {
    if (d) comps[name] = {{"path", d->path}, {"sha256", d->sha256}};
  };
  put("vae", vae);
  put("contrastive", contrastive);
  put("ldm", ldm);
  json aux_j = json::object();
  for (const auto& [attr, d] : aux) aux_j[attr] = {{"path", d.path}, {"sha256", d.sha256}};
  comps["aux"] = aux_j;
  doc["components"] = comps;
  doc["schedule"] = {{"timesteps", schedule.timesteps},
                     {"beta_start", schedule.beta_start},
                     {"beta_end", schedule.beta_end}};
  doc["schema"] = SchemaToJson(schema);
  return doc.dump(2) + "\n";
}

BundleManifest BundleManifest::FromJson(const std::string& text) {
  BundleManifest m;
  try {
    const json doc = json::parse(text);
    Require(doc.at("format").get<std::string>() == "veil.manifest", ErrorCode::kFormat,
            "not a bundle manifest");
    const int version = doc.at("format_version").get<int>();
    Require(version == kManifestFormatVersion, ErrorCode::kFormat,
            "unsupported manifest format version " + std::to_string(version));
    const auto& comps = doc.at("components");
    auto get = [&](const char* name) -> std::optional<ComponentDigest> {
      if (!comps.contains(name)) return std::nullopt;
      return ComponentDigest{comps.at(name).at("path").get<std::string>(),
                             comps.at(name).at("sha256").get<std::string>()};
    };
    m.vae = get("vae");
    m.contrastive = get("contrastive");
    m.ldm = get("ldm");
    for (const auto& [attr, d] : comps.at("aux").items()) {
      m.aux[attr] = {d.at("path").get<std::string>(), d.at("sha256").get<std::string>()};
    }
    const auto& s = doc.at("schedule");
    m.schedule = {s.at("timesteps").get<int>(), s.at("beta_start").get<double>(),
                  s.at("beta_end").get<double>()};
    m.schema = SchemaFromJson(doc.at("schema"));
  } catch (const json::exception& e) {
    Fail(ErrorCode::kFormat, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

namespace {

dataio::AttributeSchema ReadSchema(const Workspace& ws) {
  Require(fs::exists(ws.SchemaJson()), ErrorCode::kDependency,
          "no dataset in workspace " + ws.root().string() + "; run gen-data first");
  const json doc = ReadJson(ws.SchemaJson());
  try {
    return SchemaFromJson(doc.at("schema"));
  } catch (const json::exception& e) {
    Fail(ErrorCode::kFormat, std::string("malformed schema.json: ") + e.what());
  }
}

ComponentDigest DigestOf(const Workspace& ws, const fs::path& path) {
  return {ws.Relative(path), FileDigest(path)};
}

}  // namespace

BundleManifest ScanManifest(const Workspace& ws, const RunConfig& config) {
  BundleManifest m;
  m.schema = ReadSchema(ws);
  m.schedule = config.schedule;
  auto maybe = [&](Stage s) -> std::optional<ComponentDigest> {
    const fs::path p = ws.Checkpoint(s);
    if (!fs::exists(p)) return std::nullopt;
    return DigestOf(ws, p);
  };
  m.vae = maybe(Stage::kVae);
  m.contrastive = maybe(Stage::kContrastive);
  m.ldm = maybe(Stage::kLdm);
  if (fs::exists(ws.Checkpoint(Stage::kLdm))) {
    // The schedule actually trained with wins over the current config.
    const json meta = json::parse(nn::LoadCheckpoint(ws.Checkpoint(Stage::kLdm)).metadata);
    if (meta.contains("run_config")) {
      const auto& rc = meta.at("run_config").at("ldm");
      m.schedule = {rc.at("timesteps").get<int>(), rc.at("beta_start").get<double>(),
                    rc.at("beta_end").get<double>()};
    }
  }
  for (const auto& attr : AttributesWithRole(m.schema, dataio::AttributeRole::kPrivate)) {
    const fs::path p = ws.AuxCheckpoint(attr);
    if (fs::exists(p)) m.aux[attr] = DigestOf(ws, p);
  }
  return m;
}

BundleManifest ReadManifest(const Workspace& ws) {
  Require(fs::exists(ws.Manifest()), ErrorCode::kDependency,
          "no bundle manifest in " + ws.root().string() + "; train the model stages first");
  return BundleManifest::FromJson(ReadFileText(ws.Manifest()));
}

namespace {

nn::Checkpoint LoadVerified(const Workspace& ws, const std::optional<ComponentDigest>& d,
                            const char* stage) {
  Require(d.has_value(), ErrorCode::kDependency,
          std::string("bundle is missing the '") + stage + "' component; run `train " + stage +
              "` first");
  const fs::path p = ws.root() / d->path;
  Require(fs::exists(p), ErrorCode::kDependency, "bundle component missing: " + d->path);
  Require(FileDigest(p) == d->sha256, ErrorCode::kDependency,
          "digest mismatch for " + d->path + "; the manifest is stale");
  return nn::LoadCheckpoint(p);
}

void CheckUpstream(const nn::Checkpoint& ckpt, const std::string& what,
                   const BundleManifest& m) {
  const json up = UpstreamOf(ckpt);
  auto check = [&](const char* name, const std::optional<ComponentDigest>& d) {
    if (!up.contains(name) || !d) return;
    Require(up.at(name).get<std::string>() == d->sha256, ErrorCode::kDependency,
            what + " was trained against a different " + name + " checkpoint; retrain it");
  };
  check("vae", m.vae);
  check("contrastive", m.contrastive);
}

}  // namespace

guidance::Bundle LoadBundle(const Workspace& ws, BundleManifest* manifest_out) {
  const BundleManifest m = ReadManifest(ws);
  const nn::Checkpoint vae = LoadVerified(ws, m.vae, "vae");
  const nn::Checkpoint enc = LoadVerified(ws, m.contrastive, "contrastive");
  const nn::Checkpoint ldm = LoadVerified(ws, m.ldm, "ldm");
  CheckUpstream(ldm, "ldm", m);
  guidance::Bundle bundle{vae::VaeFromCheckpoint(vae), contrastive::EncoderFromCheckpoint(enc),
                          diffusion::LdmFromCheckpoint(ldm), {}};
  for (const auto& [attr, d] : m.aux) {
    Require(m.schema.Has(attr) && m.schema.Get(attr).role == dataio::AttributeRole::kPrivate,
            ErrorCode::kSchema, "aux classifier for '" + attr + "' has no private attribute");
    const nn::Checkpoint ckpt = LoadVerified(ws, std::optional<ComponentDigest>(d), "aux");
    CheckUpstream(ckpt, "aux-" + attr, m);
    std::string recorded;
    auto eta = guidance::AuxFromCheckpoint(ckpt, &recorded);
    Require(recorded == attr, ErrorCode::kSchema,
            "aux checkpoint " + d.path + " is for attribute '" + recorded + "'");
    Require(eta.config().classes == static_cast<int>(m.schema.Get(attr).cardinality),
            ErrorCode::kSchema, "aux classifier for '" + attr + "' has the wrong class count");
    bundle.aux.emplace(attr, std::move(eta));
  }
  Require(bundle.vae.config().input_dim == bundle.encoder.config().channels *
                                               bundle.encoder.config().window_len,
          ErrorCode::kSchema, "vae and contrastive encoder disagree on the input shape");
  bundle.Validate();
  if (manifest_out != nullptr) *manifest_out = m;
  return bundle;
}

// ---- Data ----------------------------------------------------------------------

void GenData(const RunConfig& config, const Workspace& ws, bool force, std::ostream& log) {
  RequireAbsent(ws.TrainData(), force, "dataset");
  const dataio::Dataset all = dataio::GenerateSynthetic(config.data);
  const auto [tr, te] = dataio::Split(all, config.split_ratio, config.split_seed);
  const dataio::Dataset train = dataio::Standardize(tr);
  const dataio::Dataset test = dataio::ApplyStandardization(te, *train.channel_stats);
  fs::create_directories(ws.TrainData().parent_path());
  dataio::SaveDataset(train, ws.TrainData());
  dataio::SaveDataset(test, ws.TestData());

  const auto& st = *train.channel_stats;
  json doc = Header("veil.schema");
  doc["schema"] = SchemaToJson(train.schema);
  doc["channels"] = train.channels;
  doc["window_len"] = train.window_len;
  doc["channel_stats"] = {{"mean", st.mean}, {"stddev", st.stddev}, {"degenerate", st.degenerate}};
  doc["train"] = {{"path", ws.Relative(ws.TrainData())},
                  {"sha256", FileDigest(ws.TrainData())},
                  {"segments", train.size()}};
  doc["test"] = {{"path", ws.Relative(ws.TestData())},
                 {"sha256", FileDigest(ws.TestData())},
                 {"segments", test.size()}};
  doc["run_config"] = json::parse(RunConfigToJson(config));
  WriteJson(ws.SchemaJson(), doc);
  log << "gen-data: " << all.size() << " segments (" << train.size() << " train, " << test.size()
      << " test)\n";
}

DataSplits LoadData(const Workspace& ws) {
  Require(fs::exists(ws.TrainData()) && fs::exists(ws.TestData()), ErrorCode::kDependency,
          "no dataset in workspace " + ws.root().string() + "; run gen-data first");
  DataSplits d{dataio::LoadDataset(ws.TrainData()), dataio::LoadDataset(ws.TestData())};
  Require(d.train.schema == d.test.schema, ErrorCode::kSchema,
          "train and test splits have different schemas");
  return d;
}

// ---- Training ------------------------------------------------------------------

namespace {

RunConfig Shaped(RunConfig config, const dataio::Dataset& data) {
  ResolveShapes(config, data.channels, data.window_len);
  return config;
}

void WriteManifest(const Workspace& ws, const RunConfig& config) {
  WriteFileText(ws.Manifest(), ScanManifest(ws, config).ToJson());
}

void TrainVaeStage(const RunConfig& c, const Workspace& ws, const DataSplits& d,
                   std::ostream& log) {
  Rng rng(DeriveSeed(c.vae_train.seed, 100));
  vae::VaeModel<float> model(c.vae, rng);
  const auto r = vae::TrainVae(model, d.train, c.vae_train);
  WriteCsv<vae::VaeTrainStats>(ws.LossCsv("vae"), "step,loss,reconstruction,kl", r.history,
                               [](std::ostream& os, const vae::VaeTrainStats& s) {
                                 os << s.loss << ',' << s.reconstruction << ',' << s.kl;
                               });
  SaveWithProvenance(vae::VaeToCheckpoint(model), ws.Checkpoint(Stage::kVae), c);
  log << "train vae: " << r.history.size() << " steps, loss " << r.initial_loss << " -> "
      << r.final_loss << ", test reconstruction mse "
      << vae::EvaluateVae(model, d.test.Features()).reconstruction << '\n';
}

void TrainContrastiveStage(const RunConfig& c, const Workspace& ws, const DataSplits& d,
                           std::ostream& log) {
  Rng rng(DeriveSeed(c.contrastive.seed, 100));
  contrastive::PublicEncoder<float> enc(c.encoder, rng);
  const dataio::Dataset all = Concat(d.train, d.test);
  const auto r = contrastive::TrainContrastive(enc, d.train, c.contrastive, all.Features());
  WriteLossCsv(ws.LossCsv("contrastive"), r.loss_history);
  SaveWithProvenance(contrastive::EncoderToCheckpoint(enc, c.contrastive),
                     ws.Checkpoint(Stage::kContrastive), c);
  fs::remove_all(ws.SnapshotDir());
  fs::create_directories(ws.SnapshotDir());
  for (size_t e = 0; e < r.snapshots.size(); ++e) {
    std::ostringstream name;
    name << "epoch-" << std::setw(3) << std::setfill('0') << e << ".vds";
    dataio::SaveDataset(EmbeddingDataset(r.snapshots[e], all), ws.SnapshotDir() / name.str());
  }
  log << "train contrastive: " << r.loss_history.size() << " steps, epoch loss "
      << (r.epoch_loss.empty() ? 0.0 : r.epoch_loss.front()) << " -> "
      << (r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back()) << ", " << r.snapshots.size()
      << " snapshots\n";
}

struct Upstream {
  vae::VaeModel<float> vae;
  contrastive::PublicEncoder<float> encoder;
  json digests;
};

Upstream LoadUpstream(const Workspace& ws, Stage for_stage) {
  const nn::Checkpoint v = RequireCheckpoint(ws, Stage::kVae, for_stage);
  const nn::Checkpoint e = RequireCheckpoint(ws, Stage::kContrastive, for_stage);
  return {vae::VaeFromCheckpoint(v), contrastive::EncoderFromCheckpoint(e),
          {{"vae", FileDigest(ws.Checkpoint(Stage::kVae))},
           {"contrastive", FileDigest(ws.Checkpoint(Stage::kContrastive))}}};
}

void TrainLdmStage(const RunConfig& c, const Workspace& ws, const DataSplits& d,
                   std::ostream& log) {
  const Upstream up = LoadUpstream(ws, Stage::kLdm);
  const vae::CleanLatents z0 = vae::EncodeClean(up.vae, d.train.Features());
  const nn::Matrix<float> cond = contrastive::EmbedPublic(up.encoder, d.train.Features());
  diffusion::UNetConfig uc = c.unet;
  uc.latent_dim = up.vae.latent_dim();
  uc.cond_dim = up.encoder.embed_dim();
  Rng rng(DeriveSeed(c.ldm.seed, 100));
  diffusion::LdmModel model{
      diffusion::UNet1d<float>(uc, rng),
      diffusion::NoiseSchedule::Linear(c.schedule.timesteps, c.schedule.beta_start,
                                       c.schedule.beta_end),
      diffusion::LatentScaler::Identity(uc.latent_dim)};
  const auto r = diffusion::TrainLdm(model, z0, cond, c.ldm);
  std::vector<std::pair<double, double>> rows;
  for (size_t i = 0; i < r.loss_history.size(); ++i) {
    rows.emplace_back(r.loss_history[i], r.lr_history[i]);
  }
  WriteCsv<std::pair<double, double>>(
      ws.LossCsv("ldm"), "step,loss,lr", rows,
      [](std::ostream& os, const std::pair<double, double>& v) { os << v.first << ',' << v.second; });
  SaveWithProvenance(diffusion::LdmToCheckpoint(model), ws.Checkpoint(Stage::kLdm), c,
                     up.digests);
  log << "train ldm: " << r.loss_history.size() << " steps, final loss "
      << (r.loss_history.empty() ? 0.0 : r.loss_history.back()) << '\n';
}

void TrainAuxStage(const RunConfig& c, const Workspace& ws, const DataSplits& d, bool force,
                   std::ostream& log) {
  const Upstream up = LoadUpstream(ws, Stage::kAux);
  const auto privates = AttributesWithRole(d.train.schema, dataio::AttributeRole::kPrivate);
  Require(!privates.empty(), ErrorCode::kSchema, "schema has no private attribute to negate");
  for (const auto& attr : privates) RequireAbsent(ws.AuxCheckpoint(attr), force, "aux classifier");
  const vae::CleanLatents z0 = vae::EncodeClean(up.vae, d.train.Features());
  const nn::Matrix<float> z_u = contrastive::EmbedPublic(up.encoder, d.train.Features());
  const diffusion::LatentScaler scaler = diffusion::LatentScaler::Fit(z0);
  const vae::CleanLatents z0_test = vae::EncodeClean(up.vae, d.test.Features());
  const nn::Matrix<float> z_u_test = contrastive::EmbedPublic(up.encoder, d.test.Features());
  uint64_t stream = 0;
  for (const auto& attr : privates) {
    guidance::AuxPrivacyConfig ac = c.aux;
    ac.latent_dim = up.vae.latent_dim();
    ac.cond_dim = up.encoder.embed_dim();
    ac.classes = static_cast<int>(d.train.schema.Get(attr).cardinality);
    Rng rng(DeriveSeed(c.aux_train.seed, 100 + stream++));
    guidance::AuxPrivacyClassifier<float> eta(ac, rng);
    const auto r =
        guidance::TrainAuxPrivacy(eta, z0, scaler, z_u, d.train.Labels(attr), c.aux_train);
    WriteLossCsv(ws.LossCsv("aux-" + attr), r.loss_history);
    SaveWithProvenance(guidance::AuxToCheckpoint(eta, attr), ws.AuxCheckpoint(attr), c,
                       up.digests);
    log << "train aux[" << attr << "]: " << r.loss_history.size() << " steps, train acc "
        << r.train_accuracy << ", test acc "
        << guidance::AuxAccuracy(eta, z0_test, scaler, z_u_test, d.test.Labels(attr)) << '\n';
  }
}

}  // namespace

void Train(Stage stage, const RunConfig& config, const Workspace& ws, bool force,
           std::ostream& log) {
  const DataSplits d = LoadData(ws);
  const RunConfig c = Shaped(config, d.train);
  if (stage != Stage::kAux) RequireAbsent(ws.Checkpoint(stage), force, "checkpoint");
  switch (stage) {
    case Stage::kVae:
      TrainVaeStage(c, ws, d, log);
      break;
    case Stage::kContrastive:
      TrainContrastiveStage(c, ws, d, log);
      break;
    case Stage::kLdm:
      TrainLdmStage(c, ws, d, log);
      break;
    case Stage::kAux:
      TrainAuxStage(c, ws, d, force, log);
      break;
  }
  WriteManifest(ws, config);
}

// ---- Obfuscation ----------------------------------------------------------------

ObfuscateArgs DefaultObfuscateArgs(const RunConfig& config) {
  ObfuscateArgs a;
  a.spec.w_u = config.obfuscate.w_u;
  for (const auto& [attr, w] : config.obfuscate.w_s) a.spec.negations.push_back({attr, w});
  a.options.seed = config.obfuscate.seed;
  a.options.batch_size = config.obfuscate.batch_size;
  a.options.ddim_steps = config.obfuscate.ddim_steps;
  return a;
}

namespace {

json SpecJson(const guidance::GuidanceSpec& spec, const guidance::ObfuscateOptions& o) {
  json ws = json::object();
  for (const auto& n : spec.negations) ws[n.attribute] = n.w_s;
  return {{"w_u", spec.w_u},
          {"w_s", ws},
          {"seed", o.seed},
          {"batch_size", o.batch_size},
          {"ddim_steps", o.ddim_steps}};
}

json ManifestDigests(const BundleManifest& m) {
  json out = json::object();
  if (m.vae) out["vae"] = m.vae->sha256;
  if (m.contrastive) out["contrastive"] = m.contrastive->sha256;
  if (m.ldm) out["ldm"] = m.ldm->sha256;
  for (const auto& [attr, d] : m.aux) out["aux-" + attr] = d.sha256;
  return out;
}

fs::path SidecarOf(const fs::path& dataset) {
  fs::path p = dataset;
  p += ".json";
  return p;
}

}  // namespace

ObfuscateOutcome ObfuscateFile(const RunConfig& config, const Workspace& ws,
                               const ObfuscateArgs& args, std::ostream& log) {
  const fs::path input = args.input.empty() ? ws.TestData() : args.input;
  Require(fs::exists(input), ErrorCode::kDependency,
          "input dataset " + input.string() + " not found; run gen-data first");
  const dataio::Dataset data = dataio::LoadDataset(input);
  guidance::ObfuscationRequest req;
  for (const auto& n : args.spec.negations) {
    Require(data.schema.Has(n.attribute), ErrorCode::kSchema,
            "attribute '" + n.attribute + "' is not in the dataset schema");
    Require(data.schema.Get(n.attribute).role == dataio::AttributeRole::kPrivate,
            ErrorCode::kSchema, "attribute '" + n.attribute + "' is not private");
    req.s_true[n.attribute] = data.Labels(n.attribute);
  }
  BundleManifest manifest;
  const guidance::Bundle bundle = LoadBundle(ws, &manifest);
  for (const auto& n : args.spec.negations) {
    Require(bundle.aux.count(n.attribute) == 1, ErrorCode::kDependency,
            "no aux classifier for '" + n.attribute + "'; run `train aux` first");
  }
  Require(data.feature_size() == bundle.vae.config().input_dim, ErrorCode::kSchema,
          "input dataset shape does not match the bundle");
  req.features = data.Features();

  guidance::StageTimings timings;
  guidance::ObfuscateOptions opts = args.options;
  if (!config.deterministic) opts.timings = &timings;
  const Eigen::MatrixXf out = guidance::Obfuscate(bundle, req, args.spec, opts);

  ObfuscateOutcome r;
  r.output = args.output.empty() ? ws.ObfDir() / input.filename() : args.output;
  r.sidecar = SidecarOf(r.output);
  r.segments = data.size();
  fs::create_directories(r.output.parent_path());
  dataio::SaveDataset(data.WithFeatures(out), r.output);

  json doc = Header("veil.obfuscation");
  doc["input"] = {{"path", ws.Relative(input)}, {"sha256", FileDigest(input)}};
  doc["output"] = {{"path", ws.Relative(r.output)},
                   {"sha256", FileDigest(r.output)},
                   {"segments", r.segments}};
  doc["flags"] = SpecJson(args.spec, args.options);
  doc["components"] = ManifestDigests(manifest);
  doc["deterministic"] = config.deterministic;
  doc["warnings"] = args.spec.Warnings();
  if (!config.deterministic && r.segments > 0) {
    doc["seconds_per_segment"] = timings.total / static_cast<double>(r.segments);
  }
  doc["run_config"] = json::parse(RunConfigToJson(config));
  WriteJson(r.sidecar, doc);
  log << "obfuscate: " << r.segments << " segments -> " << ws.Relative(r.output) << '\n';
  for (const auto& w : args.spec.Warnings()) log << "warning: " << w << '\n';
  return r;
}

// ---- Evaluation -----------------------------------------------------------------

std::map<std::string, audit::TrainedClassifier> EnsureEvalClassifiers(const RunConfig& config,
                                                                      const Workspace& ws,
                                                                      std::ostream& log) {
  const DataSplits d = LoadData(ws);
  std::map<std::string, audit::TrainedClassifier> out;
  for (const auto& a : d.train.schema.attributes()) {
    const fs::path p = ws.EvalCheckpoint(a.name);
    if (fs::exists(p)) {
      out.emplace(a.name, audit::EvalFromCheckpoint(nn::LoadCheckpoint(p, audit::kEvalKind)));
      continue;
    }
    auto clf = audit::TrainEvalClassifier(d.train, a.name, config.eval, &d.test);
    WriteLossCsv(ws.LossCsv("eval-" + a.name), clf.loss_history);
    SaveWithProvenance(audit::EvalToCheckpoint(clf), p, config);
    log << "eval classifier[" << a.name << "]: raw held-out accuracy " << clf.held_out_accuracy
        << '\n';
    out.emplace(a.name, std::move(clf));
  }
  return out;
}

EvaluateOutcome EvaluateFile(const RunConfig& config, const Workspace& ws,
                             const EvaluateArgs& args, std::ostream& log) {
  const fs::path input = args.input.empty() ? ws.TestData() : args.input;
  Require(fs::exists(input), ErrorCode::kDependency, "input dataset " + input.string() +
                                                         " not found");
  const dataio::Dataset data = dataio::LoadDataset(input);
  const auto classifiers = EnsureEvalClassifiers(config, ws, log);
  std::map<std::string, const audit::TrainedClassifier*> use;
  json clf_digests = json::object();
  for (const auto& [name, clf] : classifiers) {
    if (!data.schema.Has(name)) continue;
    use[name] = &clf;
    clf_digests[name] = FileDigest(ws.EvalCheckpoint(name));
  }
  EvaluateOutcome r;
  r.report = audit::Evaluate(data, use);

  json ctx = {{"input", {{"path", ws.Relative(input)}, {"sha256", FileDigest(input)}}},
              {"classifiers", clf_digests},
              {"run_config", json::parse(RunConfigToJson(config))}};
  const fs::path sidecar = SidecarOf(input);
  if (fs::exists(sidecar)) {
    const json side = ReadJson(sidecar);
    ctx["guidance"] = side.at("flags");
    ctx["components"] = side.at("components");
    if (side.contains("seconds_per_segment")) {
      r.report.seconds_per_segment = side.at("seconds_per_segment").get<double>();
    }
  }
  if (args.reid_train) {
    Require(fs::exists(*args.reid_train), ErrorCode::kDependency,
            "re-identification training set " + args.reid_train->string() + " not found");
    const dataio::Dataset reid = dataio::LoadDataset(*args.reid_train);
    json reid_j = json::object();
    for (const auto& attr : AttributesWithRole(data.schema, dataio::AttributeRole::kPrivate)) {
      const double acc = audit::ReidentificationAttack(reid, data, attr, config.eval);
      r.reidentification[attr] = acc;
      reid_j[attr] = {{"accuracy", acc},
                      {"privacy_loss",
                       audit::PrivacyLoss(acc, static_cast<int>(data.schema.Get(attr).cardinality))}};
      log << "re-identification[" << attr << "]: accuracy " << acc << '\n';
    }
    ctx["reidentification"] = reid_j;
    ctx["reid_train"] = {{"path", ws.Relative(*args.reid_train)},
                         {"sha256", FileDigest(*args.reid_train)}};
  }
  r.report.context_json = ctx.dump();
  r.report_path = args.report.empty()
                      ? ws.Reports() / ("eval-" + input.parent_path().filename().string() + "-" +
                                       input.stem().string() + ".json")
                      : args.report;
  fs::create_directories(r.report_path.parent_path());
  WriteFileText(r.report_path, audit::ReportToJson(r.report));
  for (const auto& m : r.report.attributes) {
    log << "evaluate[" << m.attribute << "]: accuracy " << m.accuracy << ", macro-F1 "
        << m.macro_f1;
    if (m.role != dataio::AttributeRole::kPublic) log << ", privacy loss " << m.privacy_loss;
    log << '\n';
  }
  return r;
}

// ---- Sweep ----------------------------------------------------------------------

audit::SweepResult Sweep(const RunConfig& config, const Workspace& ws, std::ostream& log) {
  BundleManifest manifest;
  const guidance::Bundle bundle = LoadBundle(ws, &manifest);
  const auto classifiers = EnsureEvalClassifiers(config, ws, log);
  const DataSplits d = LoadData(ws);
  dataio::Dataset eval_set = d.test;
  if (config.sweep.max_segments > 0 &&
      static_cast<size_t>(config.sweep.max_segments) < eval_set.size()) {
    std::vector<int> idx(static_cast<size_t>(config.sweep.max_segments));
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    eval_set = eval_set.Subset(idx);
  }
  std::string attr = config.sweep.attribute;
  if (attr.empty()) {
    const auto privates = AttributesWithRole(eval_set.schema, dataio::AttributeRole::kPrivate);
    Require(!privates.empty(), ErrorCode::kSchema, "schema has no private attribute");
    attr = privates.front();
  }
  Require(eval_set.schema.Has(attr), ErrorCode::kSchema,
          "sweep attribute '" + attr + "' is not in the dataset schema");
  Require(bundle.aux.count(attr) == 1, ErrorCode::kDependency,
          "no aux classifier for '" + attr + "'; run `train aux` first");
  const std::string pub = eval_set.schema.Public().name;

  audit::SweepInputs in;
  in.bundle = &bundle;
  in.eval_set = &eval_set;
  in.utility = &classifiers.at(pub);
  in.intrusive = &classifiers.at(attr);
  in.private_attribute = attr;
  in.options.seed = config.obfuscate.seed;
  in.options.batch_size = config.obfuscate.batch_size;
  in.options.ddim_steps = config.obfuscate.ddim_steps;
  in.digest = [&] {
    // Content hashes of every frozen file the sweep reads.
    std::string all;
    for (const auto& p : {ws.Checkpoint(Stage::kVae), ws.Checkpoint(Stage::kContrastive),
                          ws.Checkpoint(Stage::kLdm), ws.AuxCheckpoint(attr),
                          ws.EvalCheckpoint(pub), ws.EvalCheckpoint(attr)}) {
      all += FileDigest(p);
    }
    return Sha256Hex(all);
  };
  const audit::SweepResult r = audit::TradeoffSweep(config.sweep.w_u_grid, config.sweep.w_s_grid,
                                                    in);
  fs::create_directories(ws.Reports());
  WriteFileText(ws.Reports() / "sweep.csv", audit::SweepCsv(r.rows));
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"w_u", row.w_u},
                    {"w_s", row.w_s},
                    {"utility_acc", row.utility_acc},
                    {"utility_f1", row.utility_f1},
                    {"intrusive_acc", row.intrusive_acc},
                    {"privacy_loss", row.privacy_loss}});
  }
  json doc = Header("veil.sweep");
  doc["attribute"] = attr;
  doc["segments"] = eval_set.size();
  doc["rows"] = rows;
  doc["digest_before"] = r.digest_before;
  doc["digest_after"] = r.digest_after;
  doc["digests_constant"] = r.digests_constant;
  doc["components"] = ManifestDigests(manifest);
  doc["run_config"] = json::parse(RunConfigToJson(config));
  WriteJson(ws.Reports() / "sweep.json", doc);
  log << "sweep: " << r.rows.size() << " cells on " << eval_set.size() << " segments, digests "
      << (r.digests_constant ? "constant" : "CHANGED") << '\n';
  return r;
}

// ---- Disentanglement audit -------------------------------------------------------

std::vector<audit::MiPoint> Audit(const RunConfig& config, const Workspace& ws,
                                  std::ostream& log) {
  Require(fs::is_directory(ws.SnapshotDir()), ErrorCode::kDependency,
          "no embedding snapshots; run `train contrastive` first");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(ws.SnapshotDir())) {
    if (e.path().extension() == ".vds") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Require(!files.empty(), ErrorCode::kDependency,
          "no embedding snapshots; run `train contrastive` first");
  std::vector<nn::Matrix<float>> snaps;
  std::map<std::string, std::pair<std::vector<int>, int>> labels;
  for (const auto& f : files) {
    const dataio::Dataset s = dataio::LoadDataset(f);
    if (labels.empty()) {
      for (const auto& a : s.schema.attributes()) {
        labels[a.name] = {s.Labels(a.name), static_cast<int>(a.cardinality)};
      }
    }
    snaps.push_back(s.Features());
  }
  const auto points = audit::DisentanglementAudit(snaps, labels, config.mine);
  fs::create_directories(ws.Reports());
  WriteFileText(ws.Reports() / "mi.csv", audit::MiCurveCsv(points));
  log << "audit: " << points.size() << " MI estimates over " << snaps.size() << " epochs x "
      << labels.size() << " attributes\n";
  return points;
}

// ---- Benchmark -------------------------------------------------------------------

const BenchRow& BenchReport::Get(const std::string& component) const {
  for (const auto& r : rows) {
    if (r.component == component) return r;
  }
  Fail(ErrorCode::kInternal, "bench report has no row '" + component + "'");
}

BenchReport Bench(const RunConfig& config, const Workspace& ws, int ddim_steps,
                  std::ostream& log) {
  Require(config.bench.n_batches >= 1 && config.bench.batch_size >= 1, ErrorCode::kConfig,
          "bench needs n_batches >= 1 and batch_size >= 1");
  const guidance::Bundle bundle = LoadBundle(ws);
  const DataSplits d = LoadData(ws);
  const Eigen::MatrixXf x = d.test.Features();
  Require(x.cols() > 0 && x.rows() == bundle.vae.config().input_dim, ErrorCode::kSchema,
          "test split does not match the bundle");

  guidance::GuidanceSpec spec;
  spec.w_u = config.obfuscate.w_u;
  for (const auto& [attr, eta] : bundle.aux) {
    const auto it = config.obfuscate.w_s.find(attr);
    spec.negations.push_back({attr, it != config.obfuscate.w_s.end() ? it->second : 0.002});
  }
  const std::vector<std::string> names = {"unet", "decoder", "aux-u", "aux-s", "total"};
  std::vector<std::vector<double>> per_batch(names.size());
  const int b = config.bench.batch_size;
  for (int k = 0; k < config.bench.n_batches; ++k) {
    guidance::ObfuscationRequest req;
    req.features.resize(x.rows(), b);
    std::vector<int> cols(static_cast<size_t>(b));
    for (int j = 0; j < b; ++j) {
      cols[static_cast<size_t>(j)] = static_cast<int>((static_cast<Eigen::Index>(k) * b + j) %
                                                      x.cols());
      req.features.col(j) = x.col(cols[static_cast<size_t>(j)]);
    }
    for (const auto& n : spec.negations) {
      const auto labels = d.test.Labels(n.attribute);
      auto& s = req.s_true[n.attribute];
      for (int c : cols) s.push_back(labels[static_cast<size_t>(c)]);
    }
    guidance::StageTimings t;
    guidance::ObfuscateOptions opts;
    opts.seed = config.obfuscate.seed;
    opts.batch_size = b;
    opts.ddim_steps = ddim_steps;
    opts.timings = &t;
    guidance::Obfuscate(bundle, req, spec, opts);
    const double per = 1000.0 / b;
    const double vals[] = {t.unet, t.decoder, t.aux_public, t.aux_private, t.total};
    for (size_t i = 0; i < names.size(); ++i) per_batch[i].push_back(vals[i] * per);
  }
  BenchReport report;
  report.ddim_steps = ddim_steps;
  report.batches = config.bench.n_batches;
  report.batch_size = b;
  json rows = json::array();
  for (size_t i = 0; i < names.size(); ++i) {
    const auto& v = per_batch[i];
    double mean = 0.0, var = 0.0;
    for (double x_ms : v) mean += x_ms;
    mean /= static_cast<double>(v.size());
    for (double x_ms : v) var += (x_ms - mean) * (x_ms - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    report.rows.push_back({names[i], mean, sd});
    rows.push_back({{"component", names[i]}, {"mean_ms", mean}, {"std_ms", sd}});
  }
  json doc = Header("veil.bench");
  doc["ddim_steps"] = ddim_steps;
  doc["batches"] = report.batches;
  doc["batch_size"] = b;
  doc["unit"] = "ms per segment";
  doc["rows"] = rows;
  WriteJson(ws.Reports() / "bench.json", doc);
  log << "component   mean_ms   std_ms   (per segment, " << report.batches << " batches of " << b
      << ", " << ddim_steps << " DDIM steps)\n";
  for (const auto& r : report.rows) {
    log << std::left << std::setw(10) << r.component << std::right << std::fixed
        << std::setprecision(3) << std::setw(10) << r.mean_ms << std::setw(9) << r.std_ms
        << '\n';
  }
  log.unsetf(std::ios::floatfield);
  return report;
}

}  // namespace veil::pipeline
