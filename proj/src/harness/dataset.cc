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

#include "clothpb/harness/dataset.h"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "clothpb/error.h"

namespace clothpb::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kCsvHeader =
    "tick,t,theta0,theta1,theta_dot0,theta_dot1,theta_ref0,theta_ref1,k_ref";

std::string FrameName(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.pgm", i);
  return buf;
}

double ParseDouble(const std::string& s, const fs::path& file, int line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::kSchema, file.string() + ":" + std::to_string(line) +
                                        ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

std::string FormatDouble(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

json ReadJsonFile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read '" + path.string() + "'");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchema, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void WriteTextFile(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path.string() + "'");
}

void WriteJsonFile(const fs::path& path, const json& j) { WriteTextFile(path, j.dump(2) + "\n"); }

EpisodeWriter::EpisodeWriter(fs::path dir, int trial, sim::MaterialParams material,
                             std::string policy, std::uint64_t seed)
    : dir_(std::move(dir)),
      trial_(trial),
      material_(material),
      policy_(std::move(policy)),
      seed_(seed) {
  material.Validate();
  fs::create_directories(dir_ / "frames");
  csv_.open(dir_ / "steps.csv", std::ios::binary | std::ios::trunc);
  if (!csv_) throw Error(ErrorKind::kIo, "cannot write '" + (dir_ / "steps.csv").string() + "'");
  csv_ << kCsvHeader << "\n";
}

EpisodeWriter::~EpisodeWriter() {
  if (!finalized_) {
    try {
      Finalize({"unfinished"});
    } catch (...) {
    }
  }
}

void EpisodeWriter::Append(const StepRow& r, const BinaryImage& frame) {
  if (finalized_) throw Error(ErrorKind::kContract, "episode already finalized");
  csv_ << r.tick << ',' << FormatDouble(r.t) << ',' << FormatDouble(r.theta[0]) << ','
       << FormatDouble(r.theta[1]) << ',' << FormatDouble(r.theta_dot[0]) << ','
       << FormatDouble(r.theta_dot[1]) << ',' << FormatDouble(r.theta_ref[0]) << ','
       << FormatDouble(r.theta_ref[1]) << ',' << FormatDouble(r.k_ref) << '\n';
  WritePgm(dir_ / "frames" / FrameName(steps_), frame);
  ++steps_;
  if (!csv_) throw Error(ErrorKind::kIo, "write to '" + dir_.string() + "' failed");
}

void EpisodeWriter::Finalize(const std::vector<std::string>& flags) {
  if (finalized_) return;
  finalized_ = true;
  csv_.close();
  json meta = {{"schema_version", kSchemaVersion},
               {"trial", trial_},
               {"material", {{"c_damp", material_.c_damp}, {"c_mass", material_.c_mass}}},
               {"policy", policy_},
               {"seed", seed_},
               {"steps", steps_},
               {"dt_tick", 0.2},
               {"flags", flags}};
  WriteJsonFile(dir_ / "meta.json", meta);
}

RunDirectory RunDirectory::Create(const fs::path& root, const json& meta) {
  fs::create_directories(root / "episodes");
  json m = meta;
  m["schema_version"] = kSchemaVersion;
  if (fs::exists(root / "meta.json")) {
    const json old = ReadJsonFile(root / "meta.json");
    if (old.value("schema_version", -1) != kSchemaVersion) {
      throw Error(ErrorKind::kSchema, "'" + root.string() + "' holds an incompatible dataset");
    }
  }
  WriteJsonFile(root / "meta.json", m);
  return RunDirectory(root, m);
}

RunDirectory RunDirectory::Open(const fs::path& root) {
  if (!fs::exists(root / "meta.json")) {
    throw Error(ErrorKind::kMissingArtifact,
                "no dataset at '" + root.string() + "'; run `clothpb collect` first");
  }
  json meta = ReadJsonFile(root / "meta.json");
  if (meta.value("schema_version", -1) != kSchemaVersion) {
    throw Error(ErrorKind::kSchema, "dataset '" + root.string() + "' has schema version " +
                                        meta.value("schema_version", json(-1)).dump() +
                                        ", expected " + std::to_string(kSchemaVersion));
  }
  return RunDirectory(root, std::move(meta));
}

std::vector<std::string> RunDirectory::EpisodeNames() const {
  std::vector<std::string> names;
  if (!fs::exists(root_ / "episodes")) return names;
  for (const auto& entry : fs::directory_iterator(root_ / "episodes")) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

fs::path RunDirectory::EpisodePath(const std::string& name) const {
  return root_ / "episodes" / name;
}

fs::path RunDirectory::NextEpisodePath() const {
  for (int i = 0;; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ep_%03d", i);
    if (!fs::exists(root_ / "episodes" / buf)) return root_ / "episodes" / buf;
  }
}

std::string RunDirectory::AppendEpisode(const EpisodeRecord& e) {
  if (e.frames.size() != e.steps.size()) {
    throw Error(ErrorKind::kContract, "episode frame count differs from step count");
  }
  const fs::path dir = NextEpisodePath();
  EpisodeWriter writer(dir, e.trial, e.material, e.policy, e.seed);
  for (std::size_t i = 0; i < e.steps.size(); ++i) writer.Append(e.steps[i], e.frames[i]);
  writer.Finalize(e.flags);
  return dir.filename().string();
}

EpisodeRecord RunDirectory::ReadEpisode(const std::string& name, bool with_frames) const {
  const fs::path dir = EpisodePath(name);
  const json meta = ReadJsonFile(dir / "meta.json");
  if (meta.value("schema_version", -1) != kSchemaVersion) {
    throw Error(ErrorKind::kSchema, "episode '" + dir.string() + "' has an unknown schema");
  }
  EpisodeRecord e;
  try {
    e.trial = meta.at("trial").get<int>();
    e.material = {meta.at("material").at("c_damp").get<double>(),
                  meta.at("material").at("c_mass").get<double>()};
    e.policy = meta.at("policy").get<std::string>();
    e.seed = meta.at("seed").get<std::uint64_t>();
    e.flags = meta.at("flags").get<std::vector<std::string>>();
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::kSchema, "episode meta '" + (dir / "meta.json").string() +
                                        "' malformed: " + ex.what());
  }
  std::ifstream csv(dir / "steps.csv");
  if (!csv) throw Error(ErrorKind::kIo, "cannot read '" + (dir / "steps.csv").string() + "'");
  std::string line;
  std::getline(csv, line);
  if (line != kCsvHeader) {
    throw Error(ErrorKind::kSchema, "unexpected header in '" + (dir / "steps.csv").string() + "'");
  }
  int lineno = 1;
  double prev_t = -1.0;
  while (std::getline(csv, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) {
      throw Error(ErrorKind::kSchema, (dir / "steps.csv").string() + ":" +
                                          std::to_string(lineno) + ": expected 9 columns");
    }
    StepRow r;
    r.tick = std::stol(cells[0]);
    const fs::path f = dir / "steps.csv";
    r.t = ParseDouble(cells[1], f, lineno);
    r.theta = {ParseDouble(cells[2], f, lineno), ParseDouble(cells[3], f, lineno)};
    r.theta_dot = {ParseDouble(cells[4], f, lineno), ParseDouble(cells[5], f, lineno)};
    r.theta_ref = {ParseDouble(cells[6], f, lineno), ParseDouble(cells[7], f, lineno)};
    r.k_ref = ParseDouble(cells[8], f, lineno);
    if (!(r.t > prev_t)) {
      throw Error(ErrorKind::kSchema, f.string() + ":" + std::to_string(lineno) +
                                          ": timestamps must increase");
    }
    prev_t = r.t;
    e.steps.push_back(r);
  }
  if (with_frames) {
    for (std::size_t i = 0; i < e.steps.size(); ++i) {
      e.frames.push_back(ReadPgm(dir / "frames" / FrameName(static_cast<int>(i))));
    }
  }
  return e;
}

}  // namespace clothpb::harness
