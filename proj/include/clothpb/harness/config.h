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

#ifndef CLOTHPB_HARNESS_CONFIG_H_
#define CLOTHPB_HARNESS_CONFIG_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clothpb/controller.h"
#include "clothpb/dpmpb.h"
#include "clothpb/perception.h"
#include "clothpb/sim/raster.h"
#include "clothpb/sim/world.h"

namespace clothpb::harness {

struct CollectConfig {
  double random_seconds = 50.0;
  double scripted_seconds = 50.0;
  int hold_steps = 2;
  // Draw the gain per command instead of holding it at fixed_gain.
  bool gain_channel = false;
  double fixed_gain = 3.0;
  double settle_seconds = 2.0;
};

struct TargetSpec {
  std::string name;
  // Either an existing PGM or a pose rendered with the cloth laid straight
  // out from the hand.
  std::string image;
  sim::JointVector theta{};
};

struct ControlExperiment {
  controller::ControlConfig control;
  double seconds = 50.0;
  int seeds = 5;
  std::vector<sim::MaterialParams> materials;
  std::vector<TargetSpec> targets;
  double gain = 3.0;
};

struct IntegratedExperiment {
  double seconds = 120.0;
  sim::MaterialParams material{0.07, 0.15};
  // Trial whose bias seeds the run; should differ from the material's own.
  int initial_trial = 0;
  int estimate_every = 25;
  int target = 0;
};

struct EstimateExperiment {
  std::vector<sim::MaterialParams> materials;
  double seconds = 50.0;
  dpmpb::EstimateOptions options;
};

struct StiffnessExperiment {
  std::vector<double> gains = {1.0, 3.0, 5.0, 7.0};
  sim::JointVector theta = {0.6, -1.2};
  int n_dirs = 16;
};

struct GainExperiment {
  double collect_seconds = 100.0;
  sim::MaterialParams material{0.05, 0.10};
  double low_gain = 1.0;
  int seeds = 5;
  double seconds = 20.0;
  int epochs = 100;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  sim::WorldConfig world;
  sim::Viewport camera;
  std::vector<double> c_damp = {0.03, 0.05, 0.07};
  std::vector<double> c_mass = {0.05, 0.10, 0.15};
  CollectConfig collect;
  perception::TrainAeOptions autoencoder{.epochs = 30, .batch_size = 32, .lr = 2e-3, .seed = 0};
  dpmpb::TrainingConfig training;
  EstimateExperiment estimate;
  ControlExperiment control;
  IntegratedExperiment integrated;
  double chamfer_seconds = 90.0;
  StiffnessExperiment stiffness;
  GainExperiment gain;

  // Material grid in c_damp-major order; index = trial id.
  std::vector<sim::MaterialParams> Materials() const;
  void Validate() const;
};

ExperimentConfig DefaultExperimentConfig();
// Keys absent from `j` keep their defaults; unknown keys are rejected.
ExperimentConfig ParseExperimentConfig(const nlohmann::json& j);
ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path);
nlohmann::json ToJson(const ExperimentConfig& config);

int TicksFor(double seconds);

}  // namespace clothpb::harness

#endif  // CLOTHPB_HARNESS_CONFIG_H_
