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

// Command-line entry point: collect | train-ae | train-model | estimate-pb |
// control | integrated | ellipsoid | analyze | serve.

#include <csignal>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "clothpb/error.h"
#include "clothpb/harness/config.h"
#include "clothpb/harness/experiments.h"
#include "clothpb/harness/teleop.h"

namespace {

using namespace clothpb;
using namespace clothpb::harness;

clothpb::harness::TeleopService* g_service = nullptr;

void OnSignal(int) {
  if (g_service) g_service->Stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cloth manipulation with a parametric-bias predictive model"};
  app.require_subcommand(1);
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "runs/default";
  bool quiet = false;
  app.add_option("--config", config_path, "JSON experiment config (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  app.add_option_function<std::uint64_t>(
      "--seed", [&](const std::uint64_t& s) { seed = s, seed_set = true; }, "Base seed");
  app.add_option("--out", out, "Artifact directory");
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  std::string collect_policy = "random";
  auto* collect = app.add_subcommand("collect", "Record training episodes on the material grid");
  collect->add_option("--policy", collect_policy, "random | controller | teleop")
      ->check(CLI::IsMember({"random", "controller", "teleop"}));
  app.add_subcommand("train-ae", "Train the silhouette autoencoder");
  app.add_subcommand("train-model", "Train the predictive model and per-trial biases");
  app.add_subcommand("estimate-pb", "Estimate biases online for the held materials");
  std::string control_policy = "both";
  auto* control = app.add_subcommand("control", "Control versus Random baseline");
  control->add_option("--policy", control_policy, "both | control | random")
      ->check(CLI::IsMember({"both", "control", "random"}));
  app.add_subcommand("integrated", "Control with periodic online bias estimation");
  app.add_subcommand("ellipsoid", "Stiffness ellipses over servo gains");
  app.add_subcommand("analyze", "Figure datasets and criteria summary from the reports");
  TeleopOptions teleop;
  auto* serve = app.add_subcommand("serve", "Teleoperation websocket service");
  serve->add_option("--port", teleop.port, "TCP port");
  serve->add_option("--address", teleop.address, "Bind address");
  serve->add_option("--state-hz", teleop.state_hz, "State broadcast rate (>= 15)");
  serve->add_flag("--frames", teleop.frames, "Attach PGM frames to state messages");
  serve->add_option("--c-damp", teleop.material.c_damp, "Initial cloth damping");
  serve->add_option("--c-mass", teleop.material.c_mass, "Initial cloth mass");

  CLI11_PARSE(app, argc, argv);

  const Logger log = [quiet](const std::string& line) {
    if (!quiet) std::cerr << line << std::endl;
  };
  try {
    ExperimentConfig config =
        config_path.empty() ? DefaultExperimentConfig() : LoadExperimentConfig(config_path);
    if (seed_set) config.seed = seed;
    config.Validate();
    const ArtifactPaths paths(out);
    const std::string cmd = app.get_subcommands().front()->get_name();
    nlohmann::json report;
    if (cmd == "serve" || (cmd == "collect" && collect_policy == "teleop")) {
      teleop.config = config;
      teleop.dataset = paths.dataset;
      TeleopService service(teleop);
      g_service = &service;
      std::signal(SIGINT, OnSignal);
      std::signal(SIGTERM, OnSignal);
      const unsigned short port = service.Start();
      log("serving on ws://" + teleop.address + ":" + std::to_string(port) + ", recording into " +
          paths.dataset.string());
      service.Wait();
      g_service = nullptr;
      return 0;
    }
    if (cmd == "collect") report = RunCollect(config, paths, collect_policy, log);
    if (cmd == "train-ae") report = RunTrainAe(config, paths, log);
    if (cmd == "train-model") report = RunTrainModel(config, paths, log);
    if (cmd == "estimate-pb") report = RunEstimatePb(config, paths, log);
    if (cmd == "control") report = RunControl(config, paths, control_policy, log);
    if (cmd == "integrated") report = RunIntegrated(config, paths, log);
    if (cmd == "ellipsoid") report = RunEllipsoid(config, paths, log);
    if (cmd == "analyze") {
      report = RunAnalyze(config, paths, log);
      std::cout << report.at("criteria").dump(2) << std::endl;
    }
    log("report written to " + paths.Report(cmd).string());
    return 0;
  } catch (const Error& e) {
    std::cerr << "error (" << ErrorKindName(e.kind()) << "): " << e.what() << std::endl;
    return e.kind() == ErrorKind::kMissingArtifact ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}
