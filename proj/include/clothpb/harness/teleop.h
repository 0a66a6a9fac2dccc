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

#ifndef CLOTHPB_HARNESS_TELEOP_H_
#define CLOTHPB_HARNESS_TELEOP_H_

#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "clothpb/harness/config.h"
#include "clothpb/sim/world.h"

namespace clothpb::harness {

struct TeleopOptions {
  ExperimentConfig config = DefaultExperimentConfig();
  // Recordings are appended here as episodes.
  std::filesystem::path dataset;
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  double state_hz = 20.0;
  // Attach a base64 PGM frame to every state message on a control tick.
  bool frames = false;
  sim::MaterialParams material{0.05, 0.10};
  // Simulated seconds per wall-clock second; 0 runs as fast as possible.
  double speed = 1.0;
};

// Websocket endpoint owning one simulated world. Clients exchange one JSON
// object per message:
//   in:  {"type":"command","theta_ref":[a,b],"k_ref":k}
//        {"type":"record","action":"start"|"stop","material":{...}}
//        {"type":"release"}
//   out: {"type":"hello",...}, {"type":"state",...}, {"type":"record",...},
//        {"type":"error","msg":...}
// The first client to command holds the command token until it releases it
// or disconnects. Commands are latched at the 5 Hz tick, latest wins.
class TeleopService {
 public:
  explicit TeleopService(TeleopOptions options);
  ~TeleopService();
  TeleopService(const TeleopService&) = delete;
  TeleopService& operator=(const TeleopService&) = delete;

  // Binds, starts the network and physics threads and returns the port.
  unsigned short Start();
  void Stop();
  // Blocks until Stop() is called from another thread or a signal handler.
  void Wait();

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

// Protocol pieces, exposed for tests.
nlohmann::json HelloMessage(const sim::ArmModel& arm, const sim::MaterialParams& material,
                            double state_hz, bool has_token);
nlohmann::json StateMessage(const sim::WorldConfig& world, const sim::WorldState& state,
                            const sim::ServoCommand& command, bool recording);
nlohmann::json ErrorMessage(const std::string& msg);

}  // namespace clothpb::harness

#endif  // CLOTHPB_HARNESS_TELEOP_H_
