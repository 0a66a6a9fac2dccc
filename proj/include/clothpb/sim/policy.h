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

#ifndef CLOTHPB_SIM_POLICY_H_
#define CLOTHPB_SIM_POLICY_H_

#include <cstdint>
#include <optional>
#include <random>

#include "clothpb/sim/world.h"

namespace clothpb::sim {

class CommandPolicy {
 public:
  virtual ~CommandPolicy() = default;
  // Command for the next 5 Hz tick.
  virtual ServoCommand Next() = 0;
};

struct GainRange {
  double min = 1.0;
  double max = 7.0;
};

// Uniform joint targets, each held for `hold_steps` ticks. When `gain_range`
// is set the gain is drawn too, otherwise it stays at `fixed_gain`.
class RandomPolicy : public CommandPolicy {
 public:
  RandomPolicy(std::uint64_t seed, std::array<JointLimits, 2> limits, int hold_steps,
               std::optional<GainRange> gain_range = std::nullopt,
               double fixed_gain = 3.0);

  ServoCommand Next() override;

 private:
  std::mt19937_64 rng_;
  std::array<JointLimits, 2> limits_;
  int hold_steps_;
  std::optional<GainRange> gain_range_;
  double fixed_gain_;
  long tick_ = 0;
  ServoCommand current_;
};

// Stand-in for a human operator: repeated swing-and-fling cycles with random
// period, amplitude and posture.
class FlingPolicy : public CommandPolicy {
 public:
  FlingPolicy(std::uint64_t seed, std::array<JointLimits, 2> limits,
              std::optional<GainRange> gain_range = std::nullopt,
              double fixed_gain = 3.0);

  ServoCommand Next() override;

 private:
  void NewCycle();

  std::mt19937_64 rng_;
  std::array<JointLimits, 2> limits_;
  std::optional<GainRange> gain_range_;
  double fixed_gain_;
  int period_ = 8;
  int phase_ = 0;
  JointVector center_{};
  JointVector amplitude_{};
  double elbow_lag_ = 0.0;
  double gain_ = 3.0;
};

}  // namespace clothpb::sim

#endif  // CLOTHPB_SIM_POLICY_H_
