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

#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "clothpb/error.h"
#include "clothpb/harness/config.h"
#include "clothpb/harness/dataset.h"
#include "clothpb/harness/experiments.h"
#include "clothpb/sim/policy.h"

namespace clothpb::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path TempDir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("clothpb_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const Logger kQuiet = [](const std::string&) {};

ExperimentConfig SmallConfig() {
  ExperimentConfig c = DefaultExperimentConfig();
  c.c_damp = {0.03, 0.07};
  c.c_mass = {0.05};
  c.collect.random_seconds = 2.0;
  c.collect.scripted_seconds = 2.0;
  c.collect.settle_seconds = 0.5;
  return c;
}

EpisodeRecord SyntheticEpisode(int steps) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  EpisodeRecord e;
  e.trial = 4;
  e.material = {0.05, 0.10};
  e.policy = "random";
  e.seed = 99;
  for (int i = 0; i < steps; ++i) {
    StepRow r;
    r.tick = i;
    r.t = 0.2 * i;
    r.theta = {n(rng), n(rng) * 1e-300};
    r.theta_dot = {n(rng) * 1e7, -n(rng)};
    r.theta_ref = {1.0 / 3.0, -2.0 / 3.0};
    r.k_ref = 3.0;
    e.steps.push_back(r);
    BinaryImage img;
    img.at(i % kImageHeight, (3 * i) % kImageWidth) = 1;
    e.frames.push_back(img);
  }
  return e;
}

TEST(FormatDoubleTest, RoundTripsExactly) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int i = 0; i < 10000; ++i) {
    const std::uint64_t b = bits(rng);
    double v;
    std::memcpy(&v, &b, sizeof(v));
    if (!std::isfinite(v)) continue;
    const std::string text = FormatDouble(v);
    double back = 0.0;
    std::from_chars(text.data(), text.data() + text.size(), back);
    EXPECT_EQ(back, v) << text;
  }
  EXPECT_EQ(FormatDouble(0.1), "0.1");
}

TEST(DatasetTest, WriteReadWriteIsBitIdentical) {
  const fs::path a = TempDir("rt_a"), b = TempDir("rt_b");
  const json meta = {{"kind", "test"}, {"seed", 5}};
  RunDirectory ra = RunDirectory::Create(a, meta);
  const EpisodeRecord original = SyntheticEpisode(40);
  const std::string name = ra.AppendEpisode(original);
  const EpisodeRecord read = ra.ReadEpisode(name);
  EXPECT_EQ(read.steps, original.steps);
  EXPECT_EQ(read.frames, original.frames);
  EXPECT_EQ(read.trial, 4);
  EXPECT_EQ(read.material.c_mass, 0.10);

  RunDirectory rb = RunDirectory::Create(b, meta);
  const std::string name_b = rb.AppendEpisode(read);
  EXPECT_EQ(Slurp(ra.EpisodePath(name) / "steps.csv"), Slurp(rb.EpisodePath(name_b) / "steps.csv"));
  EXPECT_EQ(Slurp(ra.EpisodePath(name) / "meta.json"), Slurp(rb.EpisodePath(name_b) / "meta.json"));
  for (int i = 0; i < 40; ++i) {
    char f[32];
    std::snprintf(f, sizeof(f), "frames/%06d.pgm", i);
    EXPECT_EQ(Slurp(ra.EpisodePath(name) / f), Slurp(rb.EpisodePath(name_b) / f));
  }
}

TEST(DatasetTest, EpisodesAreNumberedInOrder) {
  const fs::path d = TempDir("order");
  RunDirectory r = RunDirectory::Create(d, json::object());
  EXPECT_EQ(r.AppendEpisode(SyntheticEpisode(2)), "ep_000");
  EXPECT_EQ(r.AppendEpisode(SyntheticEpisode(2)), "ep_001");
  EXPECT_EQ(r.EpisodeNames(), (std::vector<std::string>{"ep_000", "ep_001"}));
}

TEST(DatasetTest, FrameCountMustMatchSteps) {
  const fs::path d = TempDir("frames");
  RunDirectory r = RunDirectory::Create(d, json::object());
  EpisodeRecord e = SyntheticEpisode(3);
  e.frames.pop_back();
  try {
    r.AppendEpisode(e);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kContract);
  }
}

TEST(DatasetTest, CorruptFilesAreSchemaErrors) {
  const fs::path d = TempDir("corrupt");
  RunDirectory r = RunDirectory::Create(d, json::object());
  const std::string name = r.AppendEpisode(SyntheticEpisode(3));
  std::ofstream(r.EpisodePath(name) / "steps.csv", std::ios::app) << "1,2,3\n";
  try {
    r.ReadEpisode(name);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kSchema);
    EXPECT_NE(std::string(err.what()).find("steps.csv:5"), std::string::npos) << err.what();
  }
  WriteTextFile(d / "meta.json", "{\"schema_version\": 99}");
  EXPECT_THROW(RunDirectory::Open(d), Error);
}

TEST(DatasetTest, MissingDatasetNamesProducingCommand) {
  try {
    RunDirectory::Open(TempDir("missing") / "nothing");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kMissingArtifact);
    EXPECT_NE(std::string(err.what()).find("clothpb collect"), std::string::npos);
  }
}

TEST(ConfigTest, RoundTripsThroughJson) {
  const ExperimentConfig c = DefaultExperimentConfig();
  const ExperimentConfig d = ParseExperimentConfig(ToJson(c));
  EXPECT_EQ(ToJson(c), ToJson(d));
  EXPECT_EQ(c.Materials().size(), 9u);
  EXPECT_EQ(c.Materials()[3].c_damp, 0.05);
  EXPECT_EQ(c.Materials()[3].c_mass, 0.05);
}

TEST(ConfigTest, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(ParseExperimentConfig(json{{"sed", 1}}), Error);
  EXPECT_THROW(ParseExperimentConfig(json{{"control", {{"n_sequence", 4}}}}), Error);
  ExperimentConfig c = DefaultExperimentConfig();
  c.c_damp.clear();
  EXPECT_THROW(c.Validate(), Error);
  c = DefaultExperimentConfig();
  c.control.targets[0].image = "/nonexistent/target.pgm";
  EXPECT_THROW(c.Validate(), Error);
}

TEST(ConfigTest, TicksAreFiveHertz) {
  EXPECT_EQ(TicksFor(50.0), 250);
  EXPECT_EQ(TicksFor(90.0), 450);
}

TEST(CollectTest, FullGridYieldsPaperSampleCount) {
  const fs::path d = TempDir("full");
  const ArtifactPaths paths(d);
  const json report = RunCollect(DefaultExperimentConfig(), paths, "random", kQuiet);
  EXPECT_EQ(report["rows"].get<int>(), 4500);
  const RunDirectory run = RunDirectory::Open(paths.dataset);
  int rows = 0;
  std::set<int> trials;
  for (const auto& name : run.EpisodeNames()) {
    const EpisodeRecord e = run.ReadEpisode(name, false);
    rows += static_cast<int>(e.steps.size());
    trials.insert(e.trial);
    int frames = 0;
    for ([[maybe_unused]] const auto& f : fs::directory_iterator(run.EpisodePath(name) / "frames")) ++frames;
    EXPECT_EQ(frames, static_cast<int>(e.steps.size()));
  }
  EXPECT_EQ(rows, 4500);
  EXPECT_EQ(trials.size(), 9u);
}

TEST(CollectTest, SameSeedGivesIdenticalCsvs) {
  const ExperimentConfig c = SmallConfig();
  const ArtifactPaths a(TempDir("det_a")), b(TempDir("det_b"));
  RunCollect(c, a, "random", kQuiet);
  RunCollect(c, b, "random", kQuiet);
  const RunDirectory ra = RunDirectory::Open(a.dataset), rb = RunDirectory::Open(b.dataset);
  ASSERT_EQ(ra.EpisodeNames(), rb.EpisodeNames());
  for (const auto& name : ra.EpisodeNames()) {
    EXPECT_EQ(Slurp(ra.EpisodePath(name) / "steps.csv"), Slurp(rb.EpisodePath(name) / "steps.csv"));
    EXPECT_EQ(Slurp(ra.EpisodePath(name) / "frames/000007.pgm"),
              Slurp(rb.EpisodePath(name) / "frames/000007.pgm"));
  }
  ExperimentConfig other = c;
  other.seed = 2;
  const ArtifactPaths o(TempDir("det_o"));
  RunCollect(other, o, "random", kQuiet);
  EXPECT_NE(Slurp(ra.EpisodePath("ep_000") / "steps.csv"),
            Slurp(RunDirectory::Open(o.dataset).EpisodePath("ep_000") / "steps.csv"));
}

TEST(CollectTest, TimestampsIncreaseAndCommandsStayInLimits) {
  const ExperimentConfig c = SmallConfig();
  const ArtifactPaths p(TempDir("limits"));
  RunCollect(c, p, "random", kQuiet);
  const RunDirectory run = RunDirectory::Open(p.dataset);
  const auto& lim = c.world.arm.joint_limits;
  for (const auto& name : run.EpisodeNames()) {
    const EpisodeRecord e = run.ReadEpisode(name, false);
    for (const StepRow& r : e.steps) {
      for (int j = 0; j < 2; ++j) {
        EXPECT_GE(r.theta_ref[j], lim[j].min);
        EXPECT_LE(r.theta_ref[j], lim[j].max);
      }
      EXPECT_EQ(r.k_ref, c.collect.fixed_gain);
    }
  }
}

TEST(CollectTest, UnknownPolicyAndTeleopAreDescriptive) {
  const ArtifactPaths p(TempDir("policy"));
  EXPECT_THROW(RunCollect(SmallConfig(), p, "joystick", kQuiet), Error);
  try {
    RunCollect(SmallConfig(), p, "teleop", kQuiet);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("clothpb serve"), std::string::npos);
  }
}

TEST(PipelineTest, MissingPrerequisitesNameTheProducingCommand) {
  const fs::path d = TempDir("prereq");
  const ArtifactPaths p(d);
  const ExperimentConfig c = SmallConfig();
  auto expect_missing = [&](auto fn, const std::string& command) {
    try {
      fn();
      FAIL() << command;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kMissingArtifact) << e.what();
      EXPECT_NE(std::string(e.what()).find("clothpb " + command), std::string::npos) << e.what();
    }
  };
  expect_missing([&] { RunTrainAe(c, p, kQuiet); }, "collect");
  expect_missing([&] { RunTrainModel(c, p, kQuiet); }, "train-ae");
  expect_missing([&] { RunEstimatePb(c, p, kQuiet); }, "train-ae");
  expect_missing([&] { RunControl(c, p, "both", kQuiet); }, "train-ae");
  expect_missing([&] { RunAnalyze(c, p, kQuiet); }, "train-model");
  perception::SaveAutoencoder(p.autoencoder, perception::Autoencoder({{2, 2, 2, 2, 2}, 8}, 1));
  expect_missing([&] { RunIntegrated(c, p, kQuiet); }, "train-model");
}

TEST(PipelineTest, TinyEndToEndTrainsFromCollectedData) {
  ExperimentConfig c = SmallConfig();
  c.autoencoder.epochs = 1;
  c.training.epochs = 2;
  c.training.n_expand = 5;
  const ArtifactPaths p(TempDir("tiny"));
  RunCollect(c, p, "random", kQuiet);
  const json ae = RunTrainAe(c, p, kQuiet);
  EXPECT_TRUE(fs::exists(p.autoencoder));
  EXPECT_EQ(ae["epoch_loss"].size(), 1u);
  const json tm = RunTrainModel(c, p, kQuiet);
  EXPECT_TRUE(fs::exists(p.model));
  EXPECT_EQ(tm["rows"].get<int>(), 2 * 20);
  EXPECT_EQ(tm["biases"].size(), 2u);
  // The latent cache is keyed by the autoencoder and reused.
  const RunDirectory run = RunDirectory::Open(p.dataset);
  const fs::path cache = run.EpisodePath("ep_000") / "latents.csv";
  ASSERT_TRUE(fs::exists(cache));
  const auto model_ae = perception::LoadAutoencoder(p.autoencoder);
  const auto eps = LoadEpisodes(run, model_ae, 2);
  const dpmpb::Episode direct = ToModelEpisode(run.ReadEpisode("ep_000"), model_ae, 2);
  EXPECT_EQ(eps[0].states, direct.states);
  EXPECT_EQ(eps[0].commands, direct.commands);
}

TEST(ExperimentsTest, EllipsoidReportPassesJudge) {
  const ArtifactPaths p(TempDir("ellipsoid"));
  const json r = RunEllipsoid(DefaultExperimentConfig(), p, kQuiet);
  const Verdict v = JudgeEllipsoid(r);
  EXPECT_TRUE(v.pass) << v.detail;
  EXPECT_EQ(r["ellipses"].size(), 4u);
}

TEST(ExperimentsTest, TargetImagesAreDistinctAndNonEmpty) {
  const ExperimentConfig c = DefaultExperimentConfig();
  const BinaryImage a = TargetImage(c, c.control.targets[0]);
  const BinaryImage b = TargetImage(c, c.control.targets[1]);
  EXPECT_GT(a.ForegroundCount(), 50);
  EXPECT_GT(b.ForegroundCount(), 50);
  EXPECT_NE(a, b);
}

TEST(ExperimentsTest, DerivedSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (const char* purpose : {"a", "b"}) {
    for (std::uint64_t base : {1, 2}) {
      for (std::uint64_t i = 0; i < 10; ++i) seen.insert(DeriveSeed(base, purpose, i));
    }
  }
  EXPECT_EQ(seen.size(), 40u);
  EXPECT_EQ(DeriveSeed(7, "x", 3), DeriveSeed(7, "x", 3));
}

TEST(JudgeTest, PbOrganization) {
  json r;
  r["pca"] = {{"explained_variance_ratios", {0.7, 0.3}}, {"spearman_pc1_c_damp", -0.85}};
  EXPECT_TRUE(JudgePbOrganization(r).pass);
  r["pca"]["spearman_pc1_c_damp"] = 0.75;
  EXPECT_FALSE(JudgePbOrganization(r).pass);
  r["pca"] = {{"explained_variance_ratios", {0.5, 0.5}}, {"spearman_pc1_c_damp", 0.9}};
  EXPECT_FALSE(JudgePbOrganization(r).pass);
}

TEST(JudgeTest, ControlDominanceOnlyBelowInitialError) {
  json cell = {{"target", "t"},
               {"material", {{"c_damp", 0.03}, {"c_mass", 0.05}}},
               {"initial_error", 1.0},
               {"control_min_ratio_median", 0.4},
               {"rate",
                {{"thresholds", {0.0, 0.5, 1.0, 1.5}},
                 {"control", {0.0, 0.3, 0.5, 0.6}},
                 {"random", {0.0, 0.2, 0.5, 0.9}}}}};
  json r;
  r["cells"] = {cell};
  EXPECT_TRUE(JudgeControl(r).pass) << JudgeControl(r).detail;
  r["cells"][0]["rate"]["random"][1] = 0.31;
  EXPECT_FALSE(JudgeControl(r).pass);
  r["cells"][0]["rate"]["random"][1] = 0.2;
  r["cells"][0]["control_min_ratio_median"] = 0.6;
  EXPECT_FALSE(JudgeControl(r).pass);
}

TEST(JudgeTest, IntegratedNeedsStrictImprovementAndSameWeights) {
  json r = {{"first_third_mean_minimum", 1.0},
            {"final_third_mean_minimum", 0.8},
            {"weights_identical", true},
            {"aborted", false}};
  EXPECT_TRUE(JudgeIntegrated(r).pass);
  r["final_third_mean_minimum"] = 1.0;
  EXPECT_FALSE(JudgeIntegrated(r).pass);
  r["final_third_mean_minimum"] = 0.5;
  r["weights_identical"] = false;
  EXPECT_FALSE(JudgeIntegrated(r).pass);
}

TEST(JudgeTest, GainAllowsTies) {
  EXPECT_TRUE(JudgeGain({{"free_median", 1.0}, {"fixed_low_median", 1.0}}).pass);
  EXPECT_FALSE(JudgeGain({{"free_median", 1.1}, {"fixed_low_median", 1.0}}).pass);
}

}  // namespace
}  // namespace clothpb::harness
