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

#ifndef CLOTHPB_HARNESS_EXPERIMENTS_H_
#define CLOTHPB_HARNESS_EXPERIMENTS_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clothpb/controller.h"
#include "clothpb/dpmpb.h"
#include "clothpb/harness/config.h"
#include "clothpb/harness/dataset.h"
#include "clothpb/perception.h"

namespace clothpb::harness {

// Artifact layout under one output directory.
struct ArtifactPaths {
  explicit ArtifactPaths(std::filesystem::path out);

  std::filesystem::path out;
  std::filesystem::path dataset;
  std::filesystem::path autoencoder;
  std::filesystem::path model;
  std::filesystem::path gain_dataset;
  std::filesystem::path gain_model;
  std::filesystem::path reports;
  std::filesystem::path figures;

  std::filesystem::path Report(const std::string& command) const;
};

using Logger = std::function<void(const std::string&)>;

// Independent stream seed for (base, purpose, index).
std::uint64_t DeriveSeed(std::uint64_t base, std::string_view purpose, std::uint64_t index);

// Target silhouette: the configured PGM, or the pose rendered with the cloth
// laid straight out from the hand.
BinaryImage TargetImage(const ExperimentConfig& config, const TargetSpec& target);

// One material run: settle at `theta0`, then drive with `policy` for
// `ticks`, recording observation and command at every tick.
EpisodeRecord RecordEpisode(const ExperimentConfig& config, const sim::MaterialParams& material,
                            int trial, sim::CommandPolicy& policy, const std::string& policy_name,
                            std::uint64_t seed, int ticks, const sim::JointVector& theta0,
                            const sim::WorldState* start = nullptr,
                            sim::WorldState* end = nullptr);

// Random then scripted motion for every material of `materials`; trial id =
// index into `materials`.
nlohmann::json CollectDataset(const ExperimentConfig& config,
                              const std::vector<sim::MaterialParams>& materials,
                              const CollectConfig& collect, const std::filesystem::path& dir,
                              const Logger& log);

// Model-ready episodes; latents come from (and are cached beside) the frames.
std::vector<dpmpb::Episode> LoadEpisodes(const RunDirectory& run,
                                         const perception::Autoencoder& ae,
                                         int command_dim);
dpmpb::Episode ToModelEpisode(const EpisodeRecord& record, const perception::Autoencoder& ae,
                              int command_dim);

perception::Autoencoder RequireAutoencoder(const ArtifactPaths& paths);
dpmpb::DpmpbModel RequireModel(const std::filesystem::path& path);
RunDirectory RequireDataset(const std::filesystem::path& path);

// One function per CLI command. Each writes its artifacts under `paths`,
// writes reports/<command>.json and returns the report.
nlohmann::json RunCollect(const ExperimentConfig& config, const ArtifactPaths& paths,
                          const std::string& policy, const Logger& log);
nlohmann::json RunTrainAe(const ExperimentConfig& config, const ArtifactPaths& paths,
                          const Logger& log);
nlohmann::json RunTrainModel(const ExperimentConfig& config, const ArtifactPaths& paths,
                             const Logger& log);
nlohmann::json RunEstimatePb(const ExperimentConfig& config, const ArtifactPaths& paths,
                             const Logger& log);
// `policy` is "both", "control" or "random".
nlohmann::json RunControl(const ExperimentConfig& config, const ArtifactPaths& paths,
                          const std::string& policy, const Logger& log);
nlohmann::json RunIntegrated(const ExperimentConfig& config, const ArtifactPaths& paths,
                             const Logger& log);
nlohmann::json RunEllipsoid(const ExperimentConfig& config, const ArtifactPaths& paths,
                            const Logger& log);
nlohmann::json RunChamfer(const ExperimentConfig& config, const ArtifactPaths& paths,
                          const Logger& log);
nlohmann::json RunGainStudy(const ExperimentConfig& config, const ArtifactPaths& paths,
                            const Logger& log);
// Aggregates the reports into figure datasets and a criteria summary.
nlohmann::json RunAnalyze(const ExperimentConfig& config, const ArtifactPaths& paths,
                          const Logger& log);

// Per-criterion verdicts derived from the reports.
struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
};
Verdict JudgePbOrganization(const nlohmann::json& train_report);
Verdict JudgeEstimation(const nlohmann::json& estimate_report);
Verdict JudgeControl(const nlohmann::json& control_report);
Verdict JudgeIntegrated(const nlohmann::json& integrated_report);
Verdict JudgeChamfer(const nlohmann::json& chamfer_report);
Verdict JudgeEllipsoid(const nlohmann::json& ellipsoid_report);
Verdict JudgeGain(const nlohmann::json& gain_report);

}  // namespace clothpb::harness

#endif  // CLOTHPB_HARNESS_EXPERIMENTS_H_
