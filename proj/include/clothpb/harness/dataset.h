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

#ifndef CLOTHPB_HARNESS_DATASET_H_
#define CLOTHPB_HARNESS_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clothpb/image.h"
#include "clothpb/sim/world.h"

namespace clothpb::harness {

inline constexpr int kSchemaVersion = 1;

// One 5 Hz row: the observation at `tick` and the command applied after it.
struct StepRow {
  long tick = 0;
  double t = 0.0;
  sim::JointVector theta{};
  sim::JointVector theta_dot{};
  sim::JointVector theta_ref{};
  double k_ref = 0.0;

  friend bool operator==(const StepRow&, const StepRow&) = default;
};

struct EpisodeRecord {
  int trial = 0;
  sim::MaterialParams material;
  std::string policy;
  std::uint64_t seed = 0;
  std::vector<StepRow> steps;
  std::vector<BinaryImage> frames;
  // E.g. "disconnected" for a teleop recording cut short.
  std::vector<std::string> flags;
};

// Streams one episode to disk: steps.csv, frames/NNNNNN.pgm and meta.json
// (written on Finalize).
class EpisodeWriter {
 public:
  EpisodeWriter(std::filesystem::path dir, int trial, sim::MaterialParams material,
                std::string policy, std::uint64_t seed);
  EpisodeWriter(const EpisodeWriter&) = delete;
  EpisodeWriter& operator=(const EpisodeWriter&) = delete;
  ~EpisodeWriter();

  void Append(const StepRow& row, const BinaryImage& frame);
  void Finalize(const std::vector<std::string>& flags = {});
  int steps() const { return steps_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  int trial_;
  sim::MaterialParams material_;
  std::string policy_;
  std::uint64_t seed_;
  std::ofstream csv_;
  int steps_ = 0;
  bool finalized_ = false;
};

// A dataset directory: meta.json plus episodes/ep_NNN subdirectories.
class RunDirectory {
 public:
  // Creates (or reuses, when the schema matches) a run directory.
  static RunDirectory Create(const std::filesystem::path& root, const nlohmann::json& meta);
  static RunDirectory Open(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  const nlohmann::json& meta() const { return meta_; }

  std::vector<std::string> EpisodeNames() const;
  std::filesystem::path EpisodePath(const std::string& name) const;
  // Directory for the next episode, ep_NNN.
  std::filesystem::path NextEpisodePath() const;
  std::string AppendEpisode(const EpisodeRecord& episode);
  EpisodeRecord ReadEpisode(const std::string& name, bool with_frames = true) const;

 private:
  RunDirectory(std::filesystem::path root, nlohmann::json meta)
      : root_(std::move(root)), meta_(std::move(meta)) {}

  std::filesystem::path root_;
  nlohmann::json meta_;
};

// Shortest decimal text that parses back to the same double.
std::string FormatDouble(double v);

nlohmann::json ReadJsonFile(const std::filesystem::path& path);
void WriteJsonFile(const std::filesystem::path& path, const nlohmann::json& j);
void WriteTextFile(const std::filesystem::path& path, const std::string& text);

}  // namespace clothpb::harness

#endif  // CLOTHPB_HARNESS_DATASET_H_
