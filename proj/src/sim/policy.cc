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

#include "clothpb/sim/policy.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "clothpb/error.h"

namespace clothpb::sim {

RandomPolicy::RandomPolicy(std::uint64_t seed, std::array<JointLimits, 2> limits,
                           int hold_steps, std::optional<GainRange> gain_range,
                           double fixed_gain)
    : rng_(seed),
      limits_(limits),
      hold_steps_(hold_steps),
      gain_range_(gain_range),
      fixed_gain_(fixed_gain) {
  if (hold_steps < 1) throw Error(ErrorKind::kContract, "hold_steps must be >= 1");
}

ServoCommand RandomPolicy::Next() {
  if (tick_ % hold_steps_ == 0) {
    for (int j = 0; j < 2; ++j) {
      std::uniform_real_distribution<double> u(limits_[j].min, limits_[j].max);
      current_.theta_ref[j] = u(rng_);
    }
    if (gain_range_) {
      std::uniform_real_distribution<double> g(gain_range_->min, gain_range_->max);
      current_.k_ref = g(rng_);
    } else {
      current_.k_ref = fixed_gain_;
    }
  }
  ++tick_;
  return current_;
}

FlingPolicy::FlingPolicy(std::uint64_t seed, std::array<JointLimits, 2> limits,
                         std::optional<GainRange> gain_range, double fixed_gain)
    : rng_(seed), limits_(limits), gain_range_(gain_range), fixed_gain_(fixed_gain) {
  NewCycle();
}

void FlingPolicy::NewCycle() {
  std::uniform_int_distribution<int> period(5, 12);
  period_ = period(rng_);
  phase_ = 0;
  for (int j = 0; j < 2; ++j) {
    const double span = limits_[j].max - limits_[j].min;
    std::uniform_real_distribution<double> center(limits_[j].min + 0.25 * span,
                                                  limits_[j].max - 0.25 * span);
    std::uniform_real_distribution<double> amplitude(0.1 * span, 0.35 * span);
    center_[j] = center(rng_);
    amplitude_[j] = amplitude(rng_);
  }
  std::uniform_real_distribution<double> lag(0.0, 0.5 * std::numbers::pi);
  elbow_lag_ = lag(rng_);
  if (gain_range_) {
    std::uniform_real_distribution<double> g(gain_range_->min, gain_range_->max);
    gain_ = g(rng_);
  } else {
    gain_ = fixed_gain_;
  }
}

ServoCommand FlingPolicy::Next() {
  if (phase_ >= period_) NewCycle();
  const double w = 2.0 * std::numbers::pi * phase_ / period_;
  ServoCommand cmd;
  cmd.theta_ref[0] = center_[0] + amplitude_[0] * std::sin(w);
  cmd.theta_ref[1] = center_[1] + amplitude_[1] * std::sin(w - elbow_lag_);
  for (int j = 0; j < 2; ++j) {
    cmd.theta_ref[j] = std::clamp(cmd.theta_ref[j], limits_[j].min, limits_[j].max);
  }
  cmd.k_ref = gain_;
  ++phase_;
  return cmd;
}

}  // namespace clothpb::sim
