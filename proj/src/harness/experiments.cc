// Copyright 2026 The clothpb Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "clothpb/harness/experiments.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "clothpb/analysis.h"
#include "clothpb/error.h"
#include "clothpb/sim/ellipsoid.h"
#include "clothpb/sim/policy.h"
#include "clothpb/sim/raster.h"

namespace clothpb::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string Timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json MaterialJson(const sim::MaterialParams& m) {
  return {{"c_damp", m.c_damp}, {"c_mass", m.c_mass}};
}

// Index of `m` in the training grid, or -1.
int GridTrial(const ExperimentConfig& config, const sim::MaterialParams& m) {
  const auto grid = config.Materials();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (std::abs(grid[i].c_damp - m.c_damp) < 1e-12 && std::abs(grid[i].c_mass - m.c_mass) < 1e-12) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

double Distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double Median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double Mean(std::span<const double> v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                   : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Start pose for evaluation seed `seed`: uniform in a band that keeps the
// cloth in view.
sim::JointVector StartPose(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> a(0.0, 1.5);
  std::uniform_real_distribution<double> b(-1.8, -0.4);
  const double t0 = a(rng);
  return {t0, b(rng)};
}

json Report(const std::string& command, const ExperimentConfig& config) {
  return {{"command", command},
          {"schema_version", kSchemaVersion},
          {"seed", config.seed},
          {"generated_at", Timestamp()}};
}

json Save(const ArtifactPaths& paths, const std::string& command, const json& report) {
  WriteJsonFile(paths.Report(command), report);
  return report;
}

json RequireReport(const ArtifactPaths& paths, const std::string& command) {
  const fs::path p = paths.Report(command);
  if (!fs::exists(p)) {
    throw Error(ErrorKind::kMissingArtifact, "missing report '" + p.string() + "'; run `clothpb " +
                                                 command + " --out " + paths.out.string() +
                                                 "` first");
  }
  return ReadJsonFile(p);
}

json Vec(std::span<const double> v) { return json(std::vector<double>(v.begin(), v.end())); }

// Records every observation and command that passes through.
class RecordingPlant : public controller::Plant {
 public:
  RecordingPlant(controller::Plant& inner, EpisodeWriter& writer)
      : inner_(inner), writer_(writer) {}
  controller::Observation Observe() override {
    last_ = inner_.Observe();
    return last_;
  }
  void Apply(const sim::ServoCommand& cmd) override {
    StepRow r;
    r.tick = tick_++;
    r.t = last_.t;
    r.theta = last_.theta;
    r.theta_dot = last_.theta_dot;
    r.theta_ref = cmd.theta_ref;
    r.k_ref = cmd.k_ref;
    writer_.Append(r, last_.image);
    inner_.Apply(cmd);
  }

 private:
  controller::Plant& inner_;
  EpisodeWriter& writer_;
  controller::Observation last_;
  long tick_ = 0;
};

std::string LatentCacheKey(const perception::Autoencoder& ae) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(Fingerprint(ae.ToParameters())));
  return buf;
}

std::vector<perception::Latent> CachedLatents(const RunDirectory& run, const std::string& name,
                                              const perception::Autoencoder& ae,
                                              const EpisodeRecord& meta_only) {
  const fs::path cache = run.EpisodePath(name) / "latents.csv";
  const std::string key = "ae," + LatentCacheKey(ae);
  std::vector<perception::Latent> out;
  {
    std::ifstream in(cache);
    std::string line;
    if (in && std::getline(in, line) && line == key) {
      while (std::getline(in, line)) {
        perception::Latent z{};
        std::stringstream ss(line);
        std::string cell;
        for (int k = 0; k < perception::kLatentDim && std::getline(ss, cell, ','); ++k) {
          z[k] = std::stod(cell);
        }
        out.push_back(z);
      }
      if (out.size() == meta_only.steps.size()) return out;
      out.clear();
    }
  }
  const EpisodeRecord full = run.ReadEpisode(name, true);
  const Tensor z = ae.EncodeBatch(full.frames);
  std::string text = key + "\n";
  for (int i = 0; i < z.dim(0); ++i) {
    perception::Latent row{};
    for (int k = 0; k < perception::kLatentDim; ++k) row[k] = z.at(i, k);
    out.push_back(row);
    text += FormatDouble(row[0]) + "," + FormatDouble(row[1]) + "," + FormatDouble(row[2]) + "\n";
  }
  WriteTextFile(cache, text);
  return out;
}

dpmpb::Episode EpisodeFromLatents(const EpisodeRecord& record,
                                  std::span<const perception::Latent> latents, int command_dim) {
  dpmpb::Episode e;
  e.trial = record.trial;
  for (std::size_t i = 0; i < record.steps.size(); ++i) {
    const StepRow& r = record.steps[i];
    const perception::Latent& z = latents[i];
    e.states.push_back({z[0], z[1], z[2], r.theta[0], r.theta[1], r.theta_dot[0], r.theta_dot[1]});
    std::vector<double> u = {r.theta_ref[0], r.theta_ref[1]};
    if (command_dim > 2) u.push_back(r.k_ref);
    e.commands.push_back(u);
  }
  return e;
}

// Rate curves of Control and Random for one (material, target) cell.
json RateCells(const std::vector<std::vector<double>>& control,
               const std::vector<std::vector<double>>& random, double initial) {
  std::vector<double> pc, pr;
  for (const auto& v : control) pc.insert(pc.end(), v.begin(), v.end());
  for (const auto& v : random) pr.insert(pr.end(), v.begin(), v.end());
  const std::vector<double> th = analysis::Linspace(0.0, initial, 51);
  json j;
  j["thresholds"] = th;
  if (!pc.empty()) j["control"] = analysis::MakeRateCurve(pc, th).rates;
  if (!pr.empty()) j["random"] = analysis::MakeRateCurve(pr, th).rates;
  return j;
}

dpmpb::DpmpbModel TrainOnRun(const RunDirectory& run, const perception::Autoencoder& ae,
                             int command_dim, const dpmpb::TrainingConfig& training,
                             std::uint64_t seed, const Logger& log, json& report) {
  const auto episodes = LoadEpisodes(run, ae, command_dim);
  int rows = 0;
  for (const auto& e : episodes) rows += e.steps();
  dpmpb::ModelConfig mc;
  mc.command_dim = command_dim;
  dpmpb::DpmpbModel model(mc, seed);
  const auto t0 = std::chrono::steady_clock::now();
  const dpmpb::TrainingReport tr = dpmpb::Train(model, episodes, training, [&](int epoch, double mse) {
    if (epoch % 10 == 0 || epoch + 1 == training.epochs) {
      log("train-model epoch " + std::to_string(epoch) + " mse " + std::to_string(mse));
    }
  });
  report["episodes"] = episodes.size();
  report["rows"] = rows;
  report["windows"] = tr.windows;
  report["skipped_trials"] = tr.skipped_trials;
  report["epoch_mse"] = tr.epoch_mse;
  report["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return model;
}

}  // namespace

ArtifactPaths::ArtifactPaths(fs::path out_dir)
    : out(out_dir),
      dataset(out_dir / "dataset"),
      autoencoder(out_dir / "autoencoder.ckpt"),
      model(out_dir / "model.ckpt"),
      gain_dataset(out_dir / "gain_dataset"),
      gain_model(out_dir / "gain_model.ckpt"),
      reports(out_dir / "reports"),
      figures(out_dir / "figures") {}

fs::path ArtifactPaths::Report(const std::string& command) const {
  return reports / (command + ".json");
}

std::uint64_t DeriveSeed(std::uint64_t base, std::string_view purpose, std::uint64_t index) {
  std::uint64_t h = 1469598103934665603ull;
  for (const char c : purpose) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  std::uint64_t x = base * 0x9E3779B97F4A7C15ull ^ h ^ (index + 1) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

BinaryImage TargetImage(const ExperimentConfig& config, const TargetSpec& target) {
  if (!target.image.empty()) return ReadPgm(target.image);
  return sim::Rasterize(config.world.cloth, sim::MakeInitialState(config.world, target.theta),
                        config.camera);
}

EpisodeRecord RecordEpisode(const ExperimentConfig& config, const sim::MaterialParams& material,
                            int trial, sim::CommandPolicy& policy, const std::string& policy_name,
                            std::uint64_t seed, int ticks, const sim::JointVector& theta0,
                            const sim::WorldState* start, sim::WorldState* end) {
  material.Validate();
  const sim::WorldConfig& world = config.world;
  sim::WorldState state =
      start ? *start : sim::SettledState(world, material, theta0, config.collect.settle_seconds);
  EpisodeRecord e;
  e.trial = trial;
  e.material = material;
  e.policy = policy_name;
  e.seed = seed;
  for (int i = 0; i < ticks; ++i) {
    const sim::ServoCommand cmd = sim::ClipCommand(world.arm, policy.Next());
    StepRow r;
    r.tick = i;
    r.t = state.t;
    r.theta = state.theta;
    r.theta_dot = state.theta_dot;
    r.theta_ref = cmd.theta_ref;
    r.k_ref = cmd.k_ref;
    e.steps.push_back(r);
    e.frames.push_back(sim::Rasterize(world.cloth, state, config.camera));
    state = sim::AdvanceTick(world, state, cmd, material);
  }
  if (end) *end = state;
  return e;
}

json CollectDataset(const ExperimentConfig& config,
                    const std::vector<sim::MaterialParams>& materials,
                    const CollectConfig& collect, const fs::path& dir, const Logger& log) {
  if (materials.empty()) throw Error(ErrorKind::kConfig, "no materials to collect");
  for (const auto& m : materials) m.Validate();
  if (fs::exists(dir)) fs::remove_all(dir);
  json meta = {{"kind", "clothpb-dataset"},
               {"seed", config.seed},
               {"dt", config.world.dt},
               {"substeps_per_tick", config.world.substeps_per_tick},
               {"tick_hz", 1.0 / (config.world.dt * config.world.substeps_per_tick)},
               {"policy", "random+scripted"},
               {"gain_channel", collect.gain_channel},
               {"created", Timestamp()}};
  for (const auto& m : materials) meta["materials"].push_back(MaterialJson(m));
  RunDirectory run = RunDirectory::Create(dir, meta);
  const auto limits = config.world.arm.joint_limits;
  const std::optional<sim::GainRange> range =
      collect.gain_channel
          ? std::optional<sim::GainRange>(sim::GainRange{config.world.arm.k_min, config.world.arm.k_max})
          : std::nullopt;
  int rows = 0;
  for (std::size_t m = 0; m < materials.size(); ++m) {
    const std::uint64_t rs = DeriveSeed(config.seed, "collect.random", m);
    const std::uint64_t ss = DeriveSeed(config.seed, "collect.scripted", m);
    sim::RandomPolicy random(rs, limits, collect.hold_steps, range, collect.fixed_gain);
    sim::WorldState mid;
    const sim::JointVector theta0 = {0.6, -1.2};
    EpisodeRecord a = RecordEpisode(config, materials[m], static_cast<int>(m), random, "random", rs,
                                    TicksFor(collect.random_seconds), theta0, nullptr, &mid);
    run.AppendEpisode(a);
    sim::FlingPolicy fling(ss, limits, range, collect.fixed_gain);
    EpisodeRecord b = RecordEpisode(config, materials[m], static_cast<int>(m), fling, "scripted", ss,
                                    TicksFor(collect.scripted_seconds), theta0, &mid);
    run.AppendEpisode(b);
    rows += static_cast<int>(a.steps.size() + b.steps.size());
    log("collect material " + std::to_string(m) + " (c_damp " + FormatDouble(materials[m].c_damp) +
        ", c_mass " + FormatDouble(materials[m].c_mass) + "): " +
        std::to_string(a.steps.size() + b.steps.size()) + " rows");
  }
  return {{"dataset", dir.string()},
          {"episodes", run.EpisodeNames().size()},
          {"rows", rows},
          {"materials", meta["materials"]}};
}

dpmpb::Episode ToModelEpisode(const EpisodeRecord& record, const perception::Autoencoder& ae,
                              int command_dim) {
  if (record.frames.size() != record.steps.size()) {
    throw Error(ErrorKind::kSchema, "episode frame count differs from step count");
  }
  const Tensor z = ae.EncodeBatch(record.frames);
  std::vector<perception::Latent> latents(record.frames.size());
  for (std::size_t i = 0; i < latents.size(); ++i) {
    for (int k = 0; k < perception::kLatentDim; ++k) latents[i][k] = z.at(static_cast<int>(i), k);
  }
  return EpisodeFromLatents(record, latents, command_dim);
}

std::vector<dpmpb::Episode> LoadEpisodes(const RunDirectory& run,
                                         const perception::Autoencoder& ae, int command_dim) {
  std::vector<dpmpb::Episode> out;
  for (const std::string& name : run.EpisodeNames()) {
    const EpisodeRecord meta = run.ReadEpisode(name, false);
    const auto latents = CachedLatents(run, name, ae, meta);
    out.push_back(EpisodeFromLatents(meta, latents, command_dim));
  }
  if (out.empty()) {
    throw Error(ErrorKind::kMissingArtifact,
                "dataset '" + run.root().string() + "' has no episodes; run `clothpb collect` first");
  }
  return out;
}

perception::Autoencoder RequireAutoencoder(const ArtifactPaths& paths) {
  if (!fs::exists(paths.autoencoder)) {
    throw Error(ErrorKind::kMissingArtifact,
                "missing autoencoder checkpoint '" + paths.autoencoder.string() +
                    "'; run `clothpb train-ae --out " + paths.out.string() + "` first");
  }
  return perception::LoadAutoencoder(paths.autoencoder);
}

dpmpb::DpmpbModel RequireModel(const fs::path& path) {
  if (!fs::exists(path)) {
    throw Error(ErrorKind::kMissingArtifact,
                "missing model checkpoint '" + path.string() + "'; run `clothpb train-model --out " +
                    path.parent_path().string() + "` first");
  }
  return dpmpb::LoadModel(path);
}

RunDirectory RequireDataset(const fs::path& path) {
  if (!fs::exists(path / "meta.json")) {
    throw Error(ErrorKind::kMissingArtifact,
                "missing dataset '" + path.string() + "'; run `clothpb collect --out " +
                    path.parent_path().string() + "` first");
  }
  return RunDirectory::Open(path);
}

json RunCollect(const ExperimentConfig& config, const ArtifactPaths& paths,
                const std::string& policy, const Logger& log) {
  json report = Report("collect", config);
  report["policy"] = policy;
  if (policy == "random") {
    report.update(CollectDataset(config, config.Materials(), config.collect, paths.dataset, log));
  } else if (policy == "controller") {
    // Closed-loop data from the current model, one episode per material and
    // target, appended to the dataset.
    const perception::Autoencoder ae = RequireAutoencoder(paths);
    const dpmpb::DpmpbModel model = RequireModel(paths.model);
    RunDirectory run = RequireDataset(paths.dataset);
    const auto grid = config.Materials();
    const int ticks = TicksFor(config.collect.random_seconds + config.collect.scripted_seconds);
    int rows = 0;
    for (std::size_t m = 0; m < grid.size(); ++m) {
      const int t = static_cast<int>(m % config.control.targets.size());
      const perception::Latent z_ref = ae.Encode(TargetImage(config, config.control.targets[t]));
      const std::uint64_t seed = DeriveSeed(config.seed, "collect.controller", m);
      EpisodeWriter writer(run.NextEpisodePath(), static_cast<int>(m), grid[m], "controller", seed);
      controller::SimPlant sim_plant(
          config.world, grid[m],
          sim::SettledState(config.world, grid[m], StartPose(seed), config.collect.settle_seconds),
          config.camera);
      RecordingPlant plant(sim_plant, writer);
      controller::LoopOptions opts;
      opts.control = config.control.control;
      opts.ticks = ticks;
      opts.gain = config.control.gain;
      const auto tel = controller::ControlLoop(plant, ae, model, model.Bias(static_cast<int>(m)), z_ref,
                                               config.world.arm, opts);
      writer.Finalize(tel.aborted ? std::vector<std::string>{"aborted"} : std::vector<std::string>{});
      rows += writer.steps();
      log("collect controller material " + std::to_string(m) + ": " + std::to_string(writer.steps()) +
          " rows");
    }
    report["dataset"] = paths.dataset.string();
    report["rows"] = rows;
  } else if (policy == "teleop") {
    throw Error(ErrorKind::kContract,
                "teleop collection records through the service; run `clothpb serve --out " +
                    paths.out.string() + "` and use record start/stop");
  } else {
    throw Error(ErrorKind::kConfig, "unknown policy '" + policy + "' (random|controller|teleop)");
  }
  return Save(paths, "collect", report);
}

json RunTrainAe(const ExperimentConfig& config, const ArtifactPaths& paths, const Logger& log) {
  const RunDirectory run = RequireDataset(paths.dataset);
  std::vector<BinaryImage> train, held;
  for (const std::string& name : run.EpisodeNames()) {
    EpisodeRecord e = run.ReadEpisode(name, true);
    for (std::size_t i = 0; i < e.frames.size(); ++i) {
      // Every tenth frame is held out for the reconstruction report.
      (i % 10 == 9 ? held : train).push_back(std::move(e.frames[i]));
    }
  }
  if (train.empty()) {
    throw Error(ErrorKind::kMissingArtifact, "dataset has no frames; run `clothpb collect` first");
  }
  perception::Autoencoder ae(perception::AutoencoderConfig{}, DeriveSeed(config.seed, "ae.init", 0));
  perception::TrainAeOptions opts = config.autoencoder;
  opts.seed = DeriveSeed(config.seed, "ae.train", 0);
  const auto t0 = std::chrono::steady_clock::now();
  const auto tr = perception::TrainAutoencoder(ae, train, opts, [&](int epoch, double loss) {
    log("train-ae epoch " + std::to_string(epoch) + " loss " + std::to_string(loss));
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  perception::SaveAutoencoder(paths.autoencoder, ae);
  std::vector<double> iou;
  for (const auto& img : held) iou.push_back(perception::Iou(img, ae.DecodeBinary(ae.Encode(img))));
  json report = Report("train-ae", config);
  report["checkpoint"] = paths.autoencoder.string();
  report["train_images"] = train.size();
  report["heldout_images"] = held.size();
  report["epoch_loss"] = tr.epoch_loss;
  report["heldout_mean_iou"] = Mean(iou);
  report["seconds"] = seconds;
  log("train-ae held-out IoU " + std::to_string(Mean(iou)));
  return Save(paths, "train-ae", report);
}

json RunTrainModel(const ExperimentConfig& config, const ArtifactPaths& paths, const Logger& log) {
  const perception::Autoencoder ae = RequireAutoencoder(paths);
  const RunDirectory run = RequireDataset(paths.dataset);
  const int command_dim = run.meta().value("gain_channel", false) ? 3 : 2;
  json report = Report("train-model", config);
  dpmpb::TrainingConfig training = config.training;
  training.seed = DeriveSeed(config.seed, "model.train", 0);
  const dpmpb::DpmpbModel model = TrainOnRun(run, ae, command_dim, training,
                                             DeriveSeed(config.seed, "model.init", 0), log, report);
  dpmpb::SaveModel(paths.model, model);
  report["checkpoint"] = paths.model.string();

  // Bias table organisation over the material grid.
  const auto grid = config.Materials();
  const Tensor& b = model.biases();
  const int k = std::min<int>(b.dim(0), static_cast<int>(grid.size()));
  Eigen::MatrixXd pts(k, dpmpb::kPbDim);
  std::vector<double> damp, mass;
  for (int i = 0; i < k; ++i) {
    for (int d = 0; d < dpmpb::kPbDim; ++d) pts(i, d) = b.at(i, d);
    damp.push_back(grid[i].c_damp);
    mass.push_back(grid[i].c_mass);
    report["biases"].push_back({{"trial", i},
                                {"material", MaterialJson(grid[i])},
                                {"pb", Vec(model.Bias(i))}});
  }
  if (k < 2) {
    report["pca"] = {{"degenerate", true}};
    return Save(paths, "train-model", report);
  }
  const analysis::PcaResult pca = analysis::Pca(pts);
  std::vector<double> pc1(k), pc2(k);
  for (int i = 0; i < k; ++i) {
    pc1[i] = pca.projected(i, 0);
    pc2[i] = pca.projected.cols() > 1 ? pca.projected(i, 1) : 0.0;
  }
  json p;
  p["explained_variance_ratios"] = pca.explained_variance_ratios;
  p["pc1"] = pc1;
  p["pc2"] = pc2;
  p["degenerate"] = pca.degenerate;
  if (k >= 3 && !pca.degenerate) {
    p["spearman_pc1_c_damp"] = analysis::Spearman(pc1, damp);
    p["spearman_pc1_c_mass"] = analysis::Spearman(pc1, mass);
    p["spearman_pc2_c_damp"] = analysis::Spearman(pc2, damp);
    p["spearman_pc2_c_mass"] = analysis::Spearman(pc2, mass);
  }
  report["pca"] = p;
  log("train-model done; PCA " + p.dump());
  return Save(paths, "train-model", report);
}

json RunEstimatePb(const ExperimentConfig& config, const ArtifactPaths& paths, const Logger& log) {
  const perception::Autoencoder ae = RequireAutoencoder(paths);
  const dpmpb::DpmpbModel model = RequireModel(paths.model);
  const std::uint64_t fp = model.WeightFingerprint();
  const int nu = model.config().command_dim;
  const auto limits = config.world.arm.joint_limits;
  const dpmpb::EstimateOptions& opts = config.estimate.options;
  const int k_trained = model.biases().dim(0);
  json report = Report("estimate-pb", config);
  for (std::size_t i = 0; i < config.estimate.materials.size(); ++i) {
    const sim::MaterialParams& m = config.estimate.materials[i];
    const int truth = GridTrial(config, m);
    const std::uint64_t seed = DeriveSeed(config.seed, "estimate.fresh", i);
    sim::RandomPolicy policy(seed, limits, config.collect.hold_steps, std::nullopt,
                             config.collect.fixed_gain);
    const EpisodeRecord rec = RecordEpisode(config, m, truth, policy, "random", seed,
                                            TicksFor(config.estimate.seconds), StartPose(seed));
    const dpmpb::Episode ep = ToModelEpisode(rec, ae, nu);
    const std::vector<double> p0(dpmpb::kPbDim, 0.0);
    const auto traj = dpmpb::EstimatePbOnline(model, p0, std::span(&ep, 1), opts);
    const std::vector<double>& p = traj.back();
    int nearest = -1;
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> dists;
    for (int t = 0; t < k_trained; ++t) {
      const double d = Distance(p, model.Bias(t));
      dists.push_back(d);
      if (d < best) best = d, nearest = t;
    }
    json entry = {{"material", MaterialJson(m)}, {"correct_trial", truth}, {"nearest_trial", nearest},
                  {"estimate", p}, {"distances", dists}, {"trajectory", traj}};

    // Self-consistency: data generated by the model itself under the true
    // bias, in windows that each start from a zero hidden state.
    if (truth >= 0) {
      const std::vector<double> p_true = model.Bias(truth);
      const dpmpb::NormalizedEpisode ne = dpmpb::NormalizeEpisodes(model, std::span(&ep, 1)).front();
      std::vector<dpmpb::Episode> synth;
      const int n = opts.n_expand;
      for (int off = 0; off + n < static_cast<int>(ne.states.size()); off += n) {
        dpmpb::Hidden h = model.ZeroHidden(1);
        const std::vector<std::vector<double>> cmds(ne.commands.begin() + off,
                                                    ne.commands.begin() + off + n);
        const auto pred = model.Rollout(ne.states[off], cmds, p_true, h);
        dpmpb::Episode s;
        s.trial = truth;
        s.states.push_back(model.state_norm().Denormalize(ne.states[off]));
        for (const auto& row : pred) s.states.push_back(model.state_norm().Denormalize(row));
        for (const auto& c : cmds) s.commands.push_back(model.command_norm().Denormalize(c));
        s.commands.push_back(s.commands.back());
        synth.push_back(std::move(s));
      }
      const auto straj = dpmpb::EstimatePbOnline(model, p0, synth, opts);
      entry["self_consistency"] = {{"initial_error", Distance(p0, p_true)},
                                   {"final_error", Distance(straj.back(), p_true)},
                                   {"trajectory", straj}};
    }
    log("estimate-pb material " + std::to_string(i) + ": nearest trial " + std::to_string(nearest) +
        " (correct " + std::to_string(truth) + ")");
    report["materials"].push_back(entry);
  }
  report["weights_unchanged"] = model.WeightFingerprint() == fp;
  return Save(paths, "estimate-pb", report);
}

json RunControl(const ExperimentConfig& config, const ArtifactPaths& paths,
                const std::string& policy, const Logger& log) {
  if (policy != "both" && policy != "control" && policy != "random") {
    throw Error(ErrorKind::kConfig, "unknown control policy '" + policy + "' (both|control|random)");
  }
  const perception::Autoencoder ae = RequireAutoencoder(paths);
  const bool run_control = policy != "random";
  std::optional<dpmpb::DpmpbModel> model;
  if (run_control) model.emplace(RequireModel(paths.model));
  const ControlExperiment& ce = config.control;
  const int ticks = TicksFor(ce.seconds);
  json report = Report("control", config);
  report["policy"] = policy;
  for (std::size_t mi = 0; mi < ce.materials.size(); ++mi) {
    const sim::MaterialParams& m = ce.materials[mi];
    std::vector<double> p(dpmpb::kPbDim, 0.0);
    const int trial = GridTrial(config, m);
    if (model && trial >= 0 && trial < model->biases().dim(0)) p = model->Bias(trial);
    for (std::size_t ti = 0; ti < ce.targets.size(); ++ti) {
      const perception::Latent z_ref = ae.Encode(TargetImage(config, ce.targets[ti]));
      std::vector<std::vector<double>> ctl_err, rnd_err;
      std::vector<double> initial, ctl_min_ratio;
      json runs = json::array();
      for (int s = 0; s < ce.seeds; ++s) {
        const std::uint64_t seed = DeriveSeed(config.seed, "control.seed", s);
        const sim::WorldState start =
            sim::SettledState(config.world, m, StartPose(seed), config.collect.settle_seconds);
        json run = {{"seed", s}};
        if (run_control) {
          controller::SimPlant plant(config.world, m, start, config.camera);
          controller::LoopOptions opts;
          opts.control = ce.control;
          opts.ticks = ticks;
          opts.gain = ce.gain;
          opts.freeze_gain = true;
          const auto tel = controller::ControlLoop(plant, ae, *model, p, z_ref, config.world.arm, opts);
          std::vector<double> err;
          for (const auto& r : tel.ticks) err.push_back(r.latent_error);
          run["control"] = err;
          run["control_aborted"] = tel.aborted;
          if (!err.empty()) {
            ctl_min_ratio.push_back(*std::min_element(err.begin(), err.end()) / err.front());
          }
          ctl_err.push_back(err);
        }
        if (policy != "control") {
          controller::SimPlant plant(config.world, m, start, config.camera);
          sim::RandomPolicy rp(DeriveSeed(config.seed, "control.random", s),
                               config.world.arm.joint_limits, config.collect.hold_steps,
                               std::nullopt, ce.gain);
          const auto tel = controller::OpenLoop(plant, ae, rp, z_ref, ticks);
          std::vector<double> err;
          for (const auto& r : tel.ticks) err.push_back(r.latent_error);
          run["random"] = err;
          rnd_err.push_back(err);
        }
        const auto& first = run_control ? ctl_err.back() : rnd_err.back();
        if (!first.empty()) initial.push_back(first.front());
        runs.push_back(run);
      }
      const double init = Mean(initial);
      json cell = {{"material", MaterialJson(m)},
                   {"target", ce.targets[ti].name},
                   {"z_ref", Vec(z_ref)},
                   {"initial_error", init},
                   {"runs", runs},
                   {"rate", RateCells(ctl_err, rnd_err, init)}};
      if (run_control) {
        cell["control_min_ratio"] = ctl_min_ratio;
        cell["control_min_ratio_median"] = Median(ctl_min_ratio);
      }
      log("control material " + std::to_string(mi) + " target " + ce.targets[ti].name +
          ": initial " + std::to_string(init) +
          (run_control ? ", median min ratio " + std::to_string(Median(ctl_min_ratio)) : ""));
      report["cells"].push_back(cell);
    }
  }
  return Save(paths, "control", report);
}

json RunIntegrated(const ExperimentConfig& config, const ArtifactPaths& paths, const Logger& log) {
  const perception::Autoencoder ae = RequireAutoencoder(paths);
  const dpmpb::DpmpbModel model = RequireModel(paths.model);
  const IntegratedExperiment& ie = config.integrated;
  const std::string before = SerializeParameters(model.weights());
  const perception::Latent z_ref =
      ae.Encode(TargetImage(config, config.control.targets.at(ie.target)));
  const std::uint64_t seed = DeriveSeed(config.seed, "integrated", 0);
  controller::SimPlant plant(
      config.world, ie.material,
      sim::SettledState(config.world, ie.material, StartPose(seed), config.collect.settle_seconds),
      config.camera);
  controller::LoopOptions opts;
  opts.control = config.control.control;
  opts.ticks = TicksFor(ie.seconds);
  opts.gain = config.control.gain;
  opts.freeze_gain = true;
  opts.estimate_every = ie.estimate_every;
  opts.estimate = config.estimate.options;
  const std::vector<double> p_init = model.Bias(ie.initial_trial);
  const auto tel = controller::IntegratedLoop(plant, ae, model, p_init, z_ref, config.world.arm, opts,
                                              [&](const controller::TickRecord& r) {
                                                if (r.tick % 50 == 0) {
                                                  log("integrated tick " + std::to_string(r.tick) +
                                                      " error " + std::to_string(r.latent_error));
                                                }
                                              });
  json report = Report("integrated", config);
  report["material"] = MaterialJson(ie.material);
  report["p_init"] = p_init;
  report["correct_trial"] = GridTrial(config, ie.material);
  if (const int t = GridTrial(config, ie.material); t >= 0) report["correct_pb"] = model.Bias(t);
  report["aborted"] = tel.aborted;
  report["abort_reason"] = tel.abort_reason;
  std::vector<double> err;
  for (const auto& r : tel.ticks) {
    err.push_back(r.latent_error);
    report["trace"].push_back({{"tick", r.tick}, {"t", r.t}, {"latent_error", r.latent_error},
                               {"loss", r.loss}, {"pb", r.pb}, {"command", r.command}});
  }
  report["pb_trajectory"] = tel.pb_trajectory;
  // Periodic minima: the smallest error in each n_periodic-tick window.
  const int np = config.control.control.n_periodic;
  std::vector<double> minima;
  for (std::size_t i = 0; i + np <= err.size(); i += np) {
    minima.push_back(*std::min_element(err.begin() + i, err.begin() + i + np));
  }
  const std::size_t third = minima.size() / 3;
  const std::vector<double> first(minima.begin(), minima.begin() + third);
  const std::vector<double> last(minima.end() - third, minima.end());
  report["periodic_minima"] = minima;
  report["first_third_mean_minimum"] = Mean(first);
  report["final_third_mean_minimum"] = Mean(last);
  report["weights_identical"] = SerializeParameters(model.weights()) == before;
  report["weight_fingerprint"] = model.WeightFingerprint();
  log("integrated first-third minima " + std::to_string(Mean(first)) + ", final-third " +
      std::to_string(Mean(last)));
  return Save(paths, "integrated", report);
}

json RunEllipsoid(const ExperimentConfig& config, const ArtifactPaths& paths, const Logger& log) {
  const StiffnessExperiment& se = config.stiffness;
  std::vector<double> gains = se.gains;
  std::sort(gains.begin(), gains.end());
  json report = Report("ellipsoid", config);
  report["theta"] = se.theta;
  std::vector<Eigen::Matrix2d> fits;
  auto mean_norm = [](const std::vector<sim::Vec2>& d) {
    double s = 0.0;
    for (const auto& v : d) s += v.norm();
    return s / static_cast<double>(d.size());
  };
  for (const double k : gains) {
    const auto disp = sim::StiffnessEllipsoid(config.world.arm, se.theta, k, se.n_dirs);
    const Eigen::Matrix2d a = sim::FitEllipse(disp);
    fits.push_back(a);
    json d = json::array();
    for (const auto& v : disp) d.push_back({v.x(), v.y()});
    report["ellipses"].push_back({{"gain", k},
                                  {"displacements", d},
                                  {"mean_displacement", mean_norm(disp)},
                                  {"map", {{a(0, 0), a(0, 1)}, {a(1, 0), a(1, 1)}}}});
    log("ellipsoid gain " + FormatDouble(k) + ": mean displacement " + std::to_string(mean_norm(disp)));
  }
  // Ellipse i+1 lies strictly inside ellipse i iff ||A_i^-1 A_{i+1}|| < 1.
  std::vector<double> nesting;
  for (std::size_t i = 0; i + 1 < fits.size(); ++i) {
    const Eigen::Matrix2d r = fits[i].inverse() * fits[i + 1];
    nesting.push_back(Eigen::JacobiSVD<Eigen::Matrix2d>(r).singularValues()(0));
  }
  report["nesting_norms"] = nesting;
  // Doubling the gain in the linear regime.
  for (const double k : {1.0, 2.0, 3.0}) {
    if (2.0 * k > config.world.arm.k_max) continue;
    const double lo = mean_norm(sim::StiffnessEllipsoid(config.world.arm, se.theta, k, se.n_dirs));
    const double hi = mean_norm(sim::StiffnessEllipsoid(config.world.arm, se.theta, 2 * k, se.n_dirs));
    report["doubling"].push_back({{"gain", k}, {"ratio", lo / hi}});
  }
  return Save(paths, "ellipsoid", report);
}

json RunChamfer(const ExperimentConfig& config, const ArtifactPaths& paths, const Logger& log) {
  const perception::Autoencoder ae = RequireAutoencoder(paths);
  const sim::MaterialParams m{0.05, 0.10};
  const TargetSpec& target = config.control.targets.at(0);
  const BinaryImage target_img = TargetImage(config, target);
  const perception::Latent z_ref = ae.Encode(target_img);
  const std::uint64_t seed = DeriveSeed(config.seed, "chamfer", 0);
  sim::RandomPolicy policy(seed, config.world.arm.joint_limits, config.collect.hold_steps,
                           std::nullopt, config.collect.fixed_gain);
  const EpisodeRecord rec = RecordEpisode(config, m, -1, policy, "random", seed,
                                          TicksFor(config.chamfer_seconds), StartPose(seed));
  const Tensor z = ae.EncodeBatch(rec.frames);
  std::vector<double> lat, chamfer, log_chamfer;
  int skipped = 0;
  for (std::size_t i = 0; i < rec.frames.size(); ++i) {
    const analysis::ChamferResult c = analysis::Chamfer(target_img, rec.frames[i]);
    if (c.empty || c.distance <= 0.0) {
      ++skipped;
      continue;
    }
    const perception::Latent zi = {z.at(static_cast<int>(i), 0), z.at(static_cast<int>(i), 1),
                                   z.at(static_cast<int>(i), 2)};
    lat.push_back(controller::LatentDistance(z_ref, zi));
    chamfer.push_back(c.distance);
    log_chamfer.push_back(std::log(c.distance));
  }
  json report = Report("chamfer", config);
  report["frames"] = rec.frames.size();
  report["used_frames"] = lat.size();
  report["skipped_frames"] = skipped;
  report["target"] = target.name;
  report["latent_distance"] = lat;
  report["chamfer"] = chamfer;
  report["pearson_latent_log_chamfer"] = analysis::Pearson(lat, log_chamfer);
  log("chamfer correlation " + std::to_string(report["pearson_latent_log_chamfer"].get<double>()) +
      " over " + std::to_string(lat.size()) + " frames");
  return Save(paths, "chamfer", report);
}

json RunGainStudy(const ExperimentConfig& config, const ArtifactPaths& paths, const Logger& log) {
  const perception::Autoencoder ae = RequireAutoencoder(paths);
  const GainExperiment& ge = config.gain;
  CollectConfig collect = config.collect;
  collect.gain_channel = true;
  collect.random_seconds = ge.collect_seconds / 2;
  collect.scripted_seconds = ge.collect_seconds / 2;
  CollectDataset(config, {ge.material}, collect, paths.gain_dataset, log);
  const RunDirectory run = RunDirectory::Open(paths.gain_dataset);
  json report = Report("gain", config);
  dpmpb::TrainingConfig training = config.training;
  training.epochs = ge.epochs;
  training.seed = DeriveSeed(config.seed, "gain.train", 0);
  json train_report;
  const dpmpb::DpmpbModel model =
      TrainOnRun(run, ae, 3, training, DeriveSeed(config.seed, "gain.init", 0), log, train_report);
  dpmpb::SaveModel(paths.gain_model, model);
  report["training"] = train_report;
  const perception::Latent z_ref = ae.Encode(TargetImage(config, config.control.targets.at(0)));
  std::vector<double> free_best, low_best;
  for (int s = 0; s < ge.seeds; ++s) {
    const std::uint64_t seed = DeriveSeed(config.seed, "gain.seed", s);
    const sim::WorldState start =
        sim::SettledState(config.world, ge.material, StartPose(seed), config.collect.settle_seconds);
    double best[2];
    for (int mode = 0; mode < 2; ++mode) {
      controller::SimPlant plant(config.world, ge.material, start, config.camera);
      controller::LoopOptions opts;
      opts.control = config.control.control;
      opts.ticks = TicksFor(ge.seconds);
      opts.gain = ge.low_gain;
      opts.freeze_gain = mode == 1;
      const auto tel = controller::ControlLoop(plant, ae, model, model.Bias(0), z_ref,
                                               config.world.arm, opts);
      best[mode] = std::numeric_limits<double>::infinity();
      for (const auto& r : tel.ticks) best[mode] = std::min(best[mode], r.loss);
    }
    free_best.push_back(best[0]);
    low_best.push_back(best[1]);
    log("gain seed " + std::to_string(s) + ": free " + std::to_string(best[0]) + ", fixed-low " +
        std::to_string(best[1]));
  }
  report["free_best_loss"] = free_best;
  report["fixed_low_best_loss"] = low_best;
  report["free_median"] = Median(free_best);
  report["fixed_low_median"] = Median(low_best);
  report["low_gain"] = ge.low_gain;
  return Save(paths, "gain", report);
}

Verdict JudgePbOrganization(const json& r) {
  Verdict v{"PB self-organization", false, ""};
  const json& p = r.at("pca");
  if (!p.contains("spearman_pc1_c_damp")) {
    v.detail = "PCA degenerate";
    return v;
  }
  const double rho = p.at("spearman_pc1_c_damp").get<double>();
  const auto ratios = p.at("explained_variance_ratios").get<std::vector<double>>();
  v.pass = std::abs(rho) >= 0.8 && ratios.size() >= 2 && ratios[0] > ratios[1];
  char buf[160];
  std::snprintf(buf, sizeof(buf), "|Spearman(PC1,c_damp)|=%.3f (>=0.8), PC ratios %.3f/%.3f",
                std::abs(rho), ratios.empty() ? 0.0 : ratios[0], ratios.size() > 1 ? ratios[1] : 0.0);
  v.detail = buf;
  return v;
}

Verdict JudgeEstimation(const json& r) {
  Verdict v{"Online estimation", false, ""};
  int correct = 0, total = 0;
  bool halves = true;
  for (const json& m : r.at("materials")) {
    ++total;
    if (m.at("nearest_trial") == m.at("correct_trial")) ++correct;
    if (m.contains("self_consistency")) {
      const json& s = m.at("self_consistency");
      halves = halves && s.at("final_error").get<double>() <= 0.5 * s.at("initial_error").get<double>();
    } else {
      halves = false;
    }
  }
  const bool weights = r.value("weights_unchanged", false);
  v.pass = correct >= 2 && halves && weights;
  v.detail = std::to_string(correct) + "/" + std::to_string(total) +
             " nearest correct (>=2), self-consistency halves error: " + (halves ? "yes" : "no") +
             ", W unchanged: " + (weights ? "yes" : "no");
  return v;
}

Verdict JudgeControl(const json& r) {
  Verdict v{"Control dominance", true, ""};
  int cells = 0, ok = 0;
  std::string worst;
  for (const json& c : r.at("cells")) {
    if (!c.at("rate").contains("control") || !c.at("rate").contains("random")) {
      v.pass = false;
      v.detail = "report lacks both policies";
      return v;
    }
    ++cells;
    const auto th = c.at("rate").at("thresholds").get<std::vector<double>>();
    const auto rc = c.at("rate").at("control").get<std::vector<double>>();
    const auto rr = c.at("rate").at("random").get<std::vector<double>>();
    const double init = c.at("initial_error").get<double>();
    bool dominates = true;
    for (std::size_t i = 0; i < th.size(); ++i) {
      if (th[i] < init && rc[i] < rr[i]) dominates = false;
    }
    const double ratio = c.at("control_min_ratio_median").get<double>();
    const bool close = ratio <= 0.5;
    if (dominates && close) ++ok;
    char buf[128];
    std::snprintf(buf, sizeof(buf), " [%s c=%.2f/%.2f: dom=%d min/init=%.2f]",
                  c.at("target").get<std::string>().c_str(),
                  c.at("material").at("c_damp").get<double>(),
                  c.at("material").at("c_mass").get<double>(), dominates, ratio);
    worst += buf;
  }
  v.pass = cells > 0 && ok == cells;
  v.detail = std::to_string(ok) + "/" + std::to_string(cells) + " cells pass" + worst;
  return v;
}

Verdict JudgeIntegrated(const json& r) {
  Verdict v{"Integrated run", false, ""};
  const double first = r.at("first_third_mean_minimum").get<double>();
  const double last = r.at("final_third_mean_minimum").get<double>();
  const bool same = r.at("weights_identical").get<bool>();
  v.pass = last < first && same && !r.at("aborted").get<bool>();
  char buf[160];
  std::snprintf(buf, sizeof(buf), "periodic minima first third %.4f, final third %.4f; W identical: %s",
                first, last, same ? "yes" : "no");
  v.detail = buf;
  return v;
}

Verdict JudgeChamfer(const json& r) {
  Verdict v{"Chamfer correlation", false, ""};
  const double rho = r.at("pearson_latent_log_chamfer").get<double>();
  const int frames = r.at("used_frames").get<int>();
  v.pass = rho >= 0.6 && frames >= 450;
  v.detail = "Pearson " + FormatDouble(std::round(rho * 1000) / 1000) + " (>=0.6) over " +
             std::to_string(frames) + " frames (>=450)";
  return v;
}

Verdict JudgeEllipsoid(const json& r) {
  Verdict v{"Stiffness ellipsoid", true, ""};
  std::string detail = "nesting norms";
  for (const json& n : r.at("nesting_norms")) {
    v.pass = v.pass && n.get<double>() < 1.0;
    detail += " " + FormatDouble(std::round(n.get<double>() * 1000) / 1000);
  }
  detail += " (<1); doubling ratios";
  for (const json& d : r.at("doubling")) {
    const double ratio = d.at("ratio").get<double>();
    v.pass = v.pass && std::abs(ratio / 2.0 - 1.0) <= 0.05;
    detail += " " + FormatDouble(std::round(ratio * 1000) / 1000);
  }
  v.detail = detail + " (2 +-5%)";
  return v;
}

Verdict JudgeGain(const json& r) {
  Verdict v{"Gain channel", false, ""};
  const double f = r.at("free_median").get<double>();
  const double l = r.at("fixed_low_median").get<double>();
  v.pass = f <= l;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "median best loss with k_ref %.4f vs fixed low gain %.4f", f, l);
  v.detail = buf;
  return v;
}

json RunAnalyze(const ExperimentConfig& config, const ArtifactPaths& paths, const Logger& log) {
  const json train = RequireReport(paths, "train-model");
  const json estimate = RequireReport(paths, "estimate-pb");
  const json control = RequireReport(paths, "control");
  const json integrated = RequireReport(paths, "integrated");
  const json ellipsoid = RequireReport(paths, "ellipsoid");
  const json chamfer = fs::exists(paths.Report("chamfer")) ? ReadJsonFile(paths.Report("chamfer"))
                                                           : RunChamfer(config, paths, log);
  const json gain = fs::exists(paths.Report("gain")) ? ReadJsonFile(paths.Report("gain"))
                                                     : RunGainStudy(config, paths, log);
  fs::create_directories(paths.figures);

  std::string pb = "trial,c_damp,c_mass,pb0,pb1,pc1,pc2\n";
  const json& pca = train.at("pca");
  for (std::size_t i = 0; i < train.at("biases").size(); ++i) {
    const json& b = train.at("biases")[i];
    pb += std::to_string(b.at("trial").get<int>()) + "," +
          FormatDouble(b.at("material").at("c_damp").get<double>()) + "," +
          FormatDouble(b.at("material").at("c_mass").get<double>()) + "," +
          FormatDouble(b.at("pb")[0].get<double>()) + "," + FormatDouble(b.at("pb")[1].get<double>()) +
          "," + FormatDouble(pca.at("pc1")[i].get<double>()) + "," +
          FormatDouble(pca.at("pc2")[i].get<double>()) + "\n";
  }
  WriteTextFile(paths.figures / "pb_scatter.csv", pb);

  std::string traj = "material,source,epoch,pb0,pb1\n";
  for (std::size_t i = 0; i < estimate.at("materials").size(); ++i) {
    const json& m = estimate.at("materials")[i];
    auto dump = [&](const json& t, const char* source) {
      for (std::size_t e = 0; e < t.size(); ++e) {
        traj += std::to_string(i) + "," + source + "," + std::to_string(e) + "," +
                FormatDouble(t[e][0].get<double>()) + "," + FormatDouble(t[e][1].get<double>()) + "\n";
      }
    };
    dump(m.at("trajectory"), "fresh");
    if (m.contains("self_consistency")) dump(m.at("self_consistency").at("trajectory"), "model");
  }
  WriteTextFile(paths.figures / "pb_trajectories.csv", traj);

  std::string rates = "c_damp,c_mass,target,policy,threshold,rate\n";
  for (const json& c : control.at("cells")) {
    const auto th = c.at("rate").at("thresholds").get<std::vector<double>>();
    for (const char* pol : {"control", "random"}) {
      if (!c.at("rate").contains(pol)) continue;
      const auto rr = c.at("rate").at(pol).get<std::vector<double>>();
      for (std::size_t i = 0; i < th.size(); ++i) {
        rates += FormatDouble(c.at("material").at("c_damp").get<double>()) + "," +
                 FormatDouble(c.at("material").at("c_mass").get<double>()) + "," +
                 c.at("target").get<std::string>() + "," + pol + "," + FormatDouble(th[i]) + "," +
                 FormatDouble(rr[i]) + "\n";
      }
    }
  }
  WriteTextFile(paths.figures / "rate_curves.csv", rates);

  std::string trace = "tick,t,latent_error,pb0,pb1\n";
  for (const json& t : integrated.at("trace")) {
    trace += std::to_string(t.at("tick").get<long>()) + "," + FormatDouble(t.at("t").get<double>()) +
             "," + FormatDouble(t.at("latent_error").get<double>()) + "," +
             FormatDouble(t.at("pb")[0].get<double>()) + "," + FormatDouble(t.at("pb")[1].get<double>()) +
             "\n";
  }
  WriteTextFile(paths.figures / "integrated_trace.csv", trace);

  std::string scatter = "latent_distance,chamfer\n";
  for (std::size_t i = 0; i < chamfer.at("chamfer").size(); ++i) {
    scatter += FormatDouble(chamfer.at("latent_distance")[i].get<double>()) + "," +
               FormatDouble(chamfer.at("chamfer")[i].get<double>()) + "\n";
  }
  WriteTextFile(paths.figures / "chamfer_scatter.csv", scatter);

  std::string ell = "gain,direction,dx,dy\n";
  for (const json& e : ellipsoid.at("ellipses")) {
    for (std::size_t i = 0; i < e.at("displacements").size(); ++i) {
      ell += FormatDouble(e.at("gain").get<double>()) + "," + std::to_string(i) + "," +
             FormatDouble(e.at("displacements")[i][0].get<double>()) + "," +
             FormatDouble(e.at("displacements")[i][1].get<double>()) + "\n";
    }
  }
  WriteTextFile(paths.figures / "ellipses.csv", ell);

  json report = Report("analyze", config);
  const std::vector<Verdict> verdicts = {
      JudgePbOrganization(train), JudgeEstimation(estimate),   JudgeControl(control),
      JudgeIntegrated(integrated), JudgeChamfer(chamfer),      JudgeEllipsoid(ellipsoid),
      JudgeGain(gain)};
  for (const Verdict& v : verdicts) {
    report["criteria"].push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
    log(std::string(v.pass ? "PASS " : "FAIL ") + v.name + ": " + v.detail);
  }
  report["figures"] = {"pb_scatter.csv", "pb_trajectories.csv", "rate_curves.csv",
                       "integrated_trace.csv", "chamfer_scatter.csv", "ellipses.csv"};
  return Save(paths, "analyze", report);
}

}  // namespace clothpb::harness
