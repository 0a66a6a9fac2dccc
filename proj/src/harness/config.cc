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

#include "clothpb/harness/config.h"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "clothpb/error.h"

namespace clothpb::harness {
namespace {

using nlohmann::json;

void AllowKeys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, where + " must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw Error(ErrorKind::kConfig, "unknown key '" + k + "' in " + where);
  }
}

template <typename T>
void Read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

sim::MaterialParams ParseMaterial(const json& j) {
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  AllowKeys(j, "material", {"c_damp", "c_mass"});
  sim::MaterialParams m;
  Read(j, "c_damp", m.c_damp);
  Read(j, "c_mass", m.c_mass);
  return m;
}

json MaterialJson(const sim::MaterialParams& m) { return {{"c_damp", m.c_damp}, {"c_mass", m.c_mass}}; }

std::vector<sim::MaterialParams> ParseMaterials(const json& j) {
  std::vector<sim::MaterialParams> out;
  for (const json& m : j) out.push_back(ParseMaterial(m));
  return out;
}

json MaterialsJson(const std::vector<sim::MaterialParams>& ms) {
  json out = json::array();
  for (const auto& m : ms) out.push_back(MaterialJson(m));
  return out;
}

void ParseWorld(const json& j, ExperimentConfig& c) {
  AllowKeys(j, "world", {"k_spring", "dt", "substeps", "limits", "gain_range", "camera",
                         "link_lengths", "gravity"});
  double k = c.world.cloth.k_spring;
  Read(j, "k_spring", k);
  sim::GridClothOptions grid;
  grid.k_spring = k;
  c.world.cloth = sim::MakeGridCloth(grid);
  Read(j, "dt", c.world.dt);
  Read(j, "substeps", c.world.substeps_per_tick);
  if (j.contains("limits")) {
    const json& l = j["limits"];
    if (!l.is_array() || l.size() != 2) throw Error(ErrorKind::kConfig, "limits needs 2 joints");
    for (int i = 0; i < 2; ++i) {
      c.world.arm.joint_limits[i] = {l[i].at(0).get<double>(), l[i].at(1).get<double>()};
    }
  }
  if (j.contains("gain_range")) {
    c.world.arm.k_min = j["gain_range"].at(0).get<double>();
    c.world.arm.k_max = j["gain_range"].at(1).get<double>();
  }
  if (j.contains("link_lengths")) {
    c.world.arm.link_lengths = {j["link_lengths"].at(0).get<double>(),
                                j["link_lengths"].at(1).get<double>()};
  }
  if (j.contains("gravity")) {
    c.world.gravity = sim::Vec2(j["gravity"].at(0).get<double>(), j["gravity"].at(1).get<double>());
  }
  if (j.contains("camera")) {
    const json& cam = j["camera"];
    AllowKeys(cam, "camera", {"x_min", "y_max", "pitch"});
    Read(cam, "x_min", c.camera.x_min);
    Read(cam, "y_max", c.camera.y_max);
    Read(cam, "pitch", c.camera.pitch);
  }
}

void ParseControlConfig(const json& j, controller::ControlConfig& c) {
  Read(j, "n_seq", c.n_seq);
  Read(j, "n_batch", c.n_batch);
  Read(j, "gamma_max", c.gamma_max);
  Read(j, "n_iter", c.n_iter);
  Read(j, "w_loss", c.w_loss);
  Read(j, "n_periodic", c.n_periodic);
  Read(j, "gamma_floor_ratio", c.gamma_floor_ratio);
}

}  // namespace

int TicksFor(double seconds) { return static_cast<int>(std::lround(seconds * 5.0)); }

std::vector<sim::MaterialParams> ExperimentConfig::Materials() const {
  std::vector<sim::MaterialParams> out;
  for (double d : c_damp) {
    for (double m : c_mass) out.push_back({d, m});
  }
  return out;
}

void ExperimentConfig::Validate() const {
  if (c_damp.empty() || c_mass.empty()) throw Error(ErrorKind::kConfig, "material grid is empty");
  for (const auto& m : Materials()) m.Validate();
  world.arm.Validate();
  world.cloth.Validate();
  if (!(world.dt > 0 && world.dt <= 5e-3) || world.substeps_per_tick < 1) {
    throw Error(ErrorKind::kConfig, "dt must lie in (0, 5e-3] and substeps >= 1");
  }
  if (std::abs(world.dt * world.substeps_per_tick - 0.2) > 1e-9) {
    throw Error(ErrorKind::kConfig, "dt * substeps must equal the 0.2 s control tick");
  }
  if (collect.hold_steps < 1) throw Error(ErrorKind::kConfig, "hold_steps must be >= 1");
  if (collect.random_seconds < 0 || collect.scripted_seconds < 0) {
    throw Error(ErrorKind::kConfig, "collection durations must be >= 0");
  }
  if (training.n_expand < 1 || training.batch < 1 || training.epochs < 1 || !(training.lr > 0)) {
    throw Error(ErrorKind::kConfig, "training values must be positive");
  }
  control.control.Validate();
  if (control.targets.empty()) throw Error(ErrorKind::kConfig, "need at least one target");
  for (const auto& t : control.targets) {
    if (!t.image.empty() && !std::filesystem::exists(t.image)) {
      throw Error(ErrorKind::kConfig, "target image '" + t.image + "' does not exist");
    }
  }
  if (integrated.target < 0 || integrated.target >= static_cast<int>(control.targets.size())) {
    throw Error(ErrorKind::kConfig, "integrated.target out of range");
  }
  if (stiffness.n_dirs < 8) throw Error(ErrorKind::kConfig, "stiffness.n_dirs must be >= 8");
}

ExperimentConfig DefaultExperimentConfig() {
  ExperimentConfig c;
  c.world = sim::DefaultWorldConfig();
  c.estimate.materials = {{0.05, 0.05}, {0.07, 0.10}, {0.03, 0.15}};
  c.control.materials = {{0.03, 0.05}, {0.07, 0.15}};
  // Cloth straight out from the hand: overhead and forward.
  c.control.targets = {{"target1", "", {1.2, -0.6}}, {"target2", "", {0.3, -0.3}}};
  return c;
}

ExperimentConfig ParseExperimentConfig(const json& j) {
  ExperimentConfig c = DefaultExperimentConfig();
  AllowKeys(j, "config", {"seed", "world", "materials", "collect", "autoencoder", "training",
                          "estimate", "control", "integrated", "chamfer_seconds", "stiffness",
                          "gain"});
  Read(j, "seed", c.seed);
  if (j.contains("world")) ParseWorld(j["world"], c);
  if (j.contains("materials")) {
    const json& m = j["materials"];
    AllowKeys(m, "materials", {"c_damp", "c_mass"});
    Read(m, "c_damp", c.c_damp);
    Read(m, "c_mass", c.c_mass);
  }
  if (j.contains("collect")) {
    const json& s = j["collect"];
    AllowKeys(s, "collect", {"random_seconds", "scripted_seconds", "hold_steps", "gain_channel",
                             "fixed_gain", "settle_seconds"});
    Read(s, "random_seconds", c.collect.random_seconds);
    Read(s, "scripted_seconds", c.collect.scripted_seconds);
    Read(s, "hold_steps", c.collect.hold_steps);
    Read(s, "gain_channel", c.collect.gain_channel);
    Read(s, "fixed_gain", c.collect.fixed_gain);
    Read(s, "settle_seconds", c.collect.settle_seconds);
  }
  if (j.contains("autoencoder")) {
    const json& s = j["autoencoder"];
    AllowKeys(s, "autoencoder", {"epochs", "batch_size", "lr"});
    Read(s, "epochs", c.autoencoder.epochs);
    Read(s, "batch_size", c.autoencoder.batch_size);
    Read(s, "lr", c.autoencoder.lr);
  }
  if (j.contains("training")) {
    const json& s = j["training"];
    AllowKeys(s, "training", {"n_expand", "batch", "epochs", "lr"});
    Read(s, "n_expand", c.training.n_expand);
    Read(s, "batch", c.training.batch);
    Read(s, "epochs", c.training.epochs);
    Read(s, "lr", c.training.lr);
  }
  if (j.contains("estimate")) {
    const json& s = j["estimate"];
    AllowKeys(s, "estimate", {"materials", "seconds", "lr", "momentum", "epochs", "n_expand"});
    if (s.contains("materials")) c.estimate.materials = ParseMaterials(s["materials"]);
    Read(s, "seconds", c.estimate.seconds);
    Read(s, "lr", c.estimate.options.lr);
    Read(s, "momentum", c.estimate.options.momentum);
    Read(s, "epochs", c.estimate.options.epochs);
    Read(s, "n_expand", c.estimate.options.n_expand);
  }
  if (j.contains("control")) {
    const json& s = j["control"];
    AllowKeys(s, "control", {"n_seq", "n_batch", "gamma_max", "n_iter", "w_loss", "n_periodic",
                             "gamma_floor_ratio", "seconds", "seeds", "materials", "targets",
                             "gain"});
    ParseControlConfig(s, c.control.control);
    Read(s, "seconds", c.control.seconds);
    Read(s, "seeds", c.control.seeds);
    Read(s, "gain", c.control.gain);
    if (s.contains("materials")) c.control.materials = ParseMaterials(s["materials"]);
    if (s.contains("targets")) {
      c.control.targets.clear();
      for (const json& t : s["targets"]) {
        AllowKeys(t, "target", {"name", "image", "theta"});
        TargetSpec spec;
        Read(t, "name", spec.name);
        Read(t, "image", spec.image);
        if (t.contains("theta")) spec.theta = {t["theta"].at(0).get<double>(), t["theta"].at(1).get<double>()};
        if (spec.name.empty()) spec.name = "target" + std::to_string(c.control.targets.size() + 1);
        c.control.targets.push_back(spec);
      }
    }
  }
  if (j.contains("integrated")) {
    const json& s = j["integrated"];
    AllowKeys(s, "integrated", {"seconds", "material", "initial_trial", "estimate_every", "target"});
    Read(s, "seconds", c.integrated.seconds);
    if (s.contains("material")) c.integrated.material = ParseMaterial(s["material"]);
    Read(s, "initial_trial", c.integrated.initial_trial);
    Read(s, "estimate_every", c.integrated.estimate_every);
    Read(s, "target", c.integrated.target);
  }
  Read(j, "chamfer_seconds", c.chamfer_seconds);
  if (j.contains("stiffness")) {
    const json& s = j["stiffness"];
    AllowKeys(s, "stiffness", {"gains", "theta", "n_dirs"});
    Read(s, "gains", c.stiffness.gains);
    if (s.contains("theta")) c.stiffness.theta = {s["theta"].at(0).get<double>(), s["theta"].at(1).get<double>()};
    Read(s, "n_dirs", c.stiffness.n_dirs);
  }
  if (j.contains("gain")) {
    const json& s = j["gain"];
    AllowKeys(s, "gain", {"collect_seconds", "material", "low_gain", "seeds", "seconds", "epochs"});
    Read(s, "collect_seconds", c.gain.collect_seconds);
    if (s.contains("material")) c.gain.material = ParseMaterial(s["material"]);
    Read(s, "low_gain", c.gain.low_gain);
    Read(s, "seeds", c.gain.seeds);
    Read(s, "seconds", c.gain.seconds);
    Read(s, "epochs", c.gain.epochs);
  }
  c.Validate();
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  // Relative target paths resolve against the config file.
  if (j.contains("control") && j["control"].contains("targets")) {
    for (json& t : j["control"]["targets"]) {
      if (t.contains("image")) {
        std::filesystem::path p = t["image"].get<std::string>();
        if (p.is_relative()) t["image"] = (path.parent_path() / p).string();
      }
    }
  }
  return ParseExperimentConfig(j);
}

json ToJson(const ExperimentConfig& c) {
  json targets = json::array();
  for (const auto& t : c.control.targets) {
    targets.push_back({{"name", t.name}, {"image", t.image}, {"theta", t.theta}});
  }
  const auto& a = c.world.arm;
  return {
      {"seed", c.seed},
      {"world",
       {{"k_spring", c.world.cloth.k_spring},
        {"dt", c.world.dt},
        {"substeps", c.world.substeps_per_tick},
        {"limits", {{a.joint_limits[0].min, a.joint_limits[0].max},
                    {a.joint_limits[1].min, a.joint_limits[1].max}}},
        {"gain_range", {a.k_min, a.k_max}},
        {"link_lengths", a.link_lengths},
        {"gravity", {c.world.gravity.x(), c.world.gravity.y()}},
        {"camera", {{"x_min", c.camera.x_min}, {"y_max", c.camera.y_max}, {"pitch", c.camera.pitch}}}}},
      {"materials", {{"c_damp", c.c_damp}, {"c_mass", c.c_mass}}},
      {"collect",
       {{"random_seconds", c.collect.random_seconds},
        {"scripted_seconds", c.collect.scripted_seconds},
        {"hold_steps", c.collect.hold_steps},
        {"gain_channel", c.collect.gain_channel},
        {"fixed_gain", c.collect.fixed_gain},
        {"settle_seconds", c.collect.settle_seconds}}},
      {"autoencoder",
       {{"epochs", c.autoencoder.epochs}, {"batch_size", c.autoencoder.batch_size}, {"lr", c.autoencoder.lr}}},
      {"training",
       {{"n_expand", c.training.n_expand}, {"batch", c.training.batch},
        {"epochs", c.training.epochs}, {"lr", c.training.lr}}},
      {"estimate",
       {{"materials", MaterialsJson(c.estimate.materials)},
        {"seconds", c.estimate.seconds},
        {"lr", c.estimate.options.lr},
        {"momentum", c.estimate.options.momentum},
        {"epochs", c.estimate.options.epochs},
        {"n_expand", c.estimate.options.n_expand}}},
      {"control",
       {{"n_seq", c.control.control.n_seq},
        {"n_batch", c.control.control.n_batch},
        {"gamma_max", c.control.control.gamma_max},
        {"n_iter", c.control.control.n_iter},
        {"w_loss", c.control.control.w_loss},
        {"n_periodic", c.control.control.n_periodic},
        {"gamma_floor_ratio", c.control.control.gamma_floor_ratio},
        {"seconds", c.control.seconds},
        {"seeds", c.control.seeds},
        {"gain", c.control.gain},
        {"materials", MaterialsJson(c.control.materials)},
        {"targets", targets}}},
      {"integrated",
       {{"seconds", c.integrated.seconds},
        {"material", MaterialJson(c.integrated.material)},
        {"initial_trial", c.integrated.initial_trial},
        {"estimate_every", c.integrated.estimate_every},
        {"target", c.integrated.target}}},
      {"chamfer_seconds", c.chamfer_seconds},
      {"stiffness", {{"gains", c.stiffness.gains}, {"theta", c.stiffness.theta}, {"n_dirs", c.stiffness.n_dirs}}},
      {"gain",
       {{"collect_seconds", c.gain.collect_seconds},
        {"material", MaterialJson(c.gain.material)},
        {"low_gain", c.gain.low_gain},
        {"seeds", c.gain.seeds},
        {"seconds", c.gain.seconds},
        {"epochs", c.gain.epochs}}},
  };
}

}  // namespace clothpb::harness
